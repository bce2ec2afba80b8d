//! Inverse-RMSE weight averaging of member forecasts.

use super::model::{recursive_forecast, FittedModel, ForecastRequest};
use super::{inverse_rmse_weights, weight_average, ForecastError, DEFAULT_P};
use crate::scalar::Scalar;
use crate::series::TimeSeries;

/// Members with their validation RMSEs and the weight exponent `p`.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble<T> {
    members: Vec<FittedModel<T>>,
    val_rmse: Vec<T>,
    p: T,
}

impl<T: Scalar> WeightedEnsemble<T> {
    pub fn new(members: Vec<FittedModel<T>>, val_rmse: Vec<T>, p: T) -> Result<Self, ForecastError> {
        if members.is_empty() {
            return Err(ForecastError::InvalidInput("ensemble needs at least one member".into()));
        }
        if members.len() != val_rmse.len() {
            return Err(ForecastError::LengthMismatch { left: members.len(), right: val_rmse.len() });
        }
        if val_rmse.iter().any(|r| r.is_nan()) {
            return Err(ForecastError::InvalidInput("validation RMSE is NaN".into()));
        }
        if !(p > T::zero()) || !p.is_finite() {
            return Err(ForecastError::InvalidHyperparameter(format!("p must be positive, got {p}")));
        }
        Ok(WeightedEnsemble { members, val_rmse, p })
    }

    pub fn with_default_p(members: Vec<FittedModel<T>>, val_rmse: Vec<T>) -> Result<Self, ForecastError> {
        Self::new(members, val_rmse, T::of(DEFAULT_P))
    }

    pub fn members(&self) -> &[FittedModel<T>] {
        &self.members
    }

    pub fn val_rmse(&self) -> &[T] {
        &self.val_rmse
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// Normalized member weights.
    pub fn weights(&self) -> Vec<T> {
        inverse_rmse_weights(&self.val_rmse, self.p)
    }

    /// Each member forecasts recursively on its own; the paths are then averaged.
    pub fn forecast(&self, request: &ForecastRequest<T>) -> Result<TimeSeries<T>, ForecastError> {
        let paths = self.member_forecasts(request)?;
        let values: Vec<Vec<T>> = paths.iter().map(|s| s.values.clone()).collect();
        let mut out = paths.into_iter().next().expect("non-empty");
        out.values = weight_average(&values, &self.val_rmse, self.p)?;
        Ok(out)
    }

    pub fn member_forecasts(&self, request: &ForecastRequest<T>) -> Result<Vec<TimeSeries<T>>, ForecastError> {
        std::thread::scope(|scope| {
            let handles: Vec<_> = self.members.iter().map(|m| scope.spawn(move || recursive_forecast(m, request))).collect();
            handles.into_iter().map(|h| h.join().expect("member forecast panicked")).collect()
        })
    }
}
