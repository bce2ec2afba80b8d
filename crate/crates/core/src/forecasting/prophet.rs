//! Decomposable regression: piecewise-linear trend, daily Fourier seasonality
//! and optional exogenous regressors, fit jointly by ridge least squares.

use serde::{Deserialize, Serialize};

use super::linalg::{ridge, LinearFit};
use super::ForecastError;
use crate::scalar::Scalar;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProphetParams {
    pub n_changepoints: usize,
    pub fourier_daily: usize,
    pub ridge_lambda: f64,
}

impl Default for ProphetParams {
    fn default() -> Self {
        ProphetParams { n_changepoints: 5, fourier_daily: 3, ridge_lambda: 1e-3 }
    }
}

/// Additive parts of one fitted value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components<T> {
    pub trend: T,
    pub seasonal: T,
    pub exogenous: T,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ProphetFit<T> {
    t0: Timestamp,
    span_minutes: f64,
    changepoints: Vec<T>,
    fourier: usize,
    pub exog: Vec<String>,
    fit: LinearFit<T>,
}

impl<T: Scalar> ProphetFit<T> {
    /// `times[j]`, `targets[j]` and `exog[j]` describe one training row.
    pub fn fit(
        times: &[Timestamp],
        step_minutes: i64,
        targets: &[T],
        exog: &[Vec<T>],
        names: Vec<String>,
        params: &ProphetParams,
    ) -> Result<Self, ForecastError> {
        let (Some(&t0), Some(&t1)) = (times.iter().min(), times.iter().max()) else {
            return Err(ForecastError::TooFewRows { needed: 1, actual: 0 });
        };
        if t1 - t0 + step_minutes < 2 * 1440 {
            return Err(ForecastError::InvalidInput(format!(
                "training rows span {} minutes; at least two full days are required",
                t1 - t0 + step_minutes
            )));
        }
        let changepoints = (1..=params.n_changepoints)
            .map(|k| T::of(k as f64 / (params.n_changepoints + 1) as f64))
            .collect();
        let mut model = ProphetFit {
            t0,
            span_minutes: (t1 - t0) as f64,
            changepoints,
            fourier: params.fourier_daily,
            exog: names,
            fit: LinearFit { intercept: T::zero(), coef: Vec::new() },
        };
        let dim = model.dim();
        let rows = times.iter().zip(targets).zip(exog).map(|((&t, &y), x)| (model.features(t, x), y));
        model.fit = ridge(rows, dim, T::of(params.ridge_lambda)).ok_or_else(|| {
            ForecastError::Degenerate("rank-deficient trend/seasonal design; increase ridge_lambda".into())
        })?;
        Ok(model)
    }

    fn dim(&self) -> usize {
        1 + self.changepoints.len() + 2 * self.fourier + self.exog.len()
    }

    fn features(&self, t: Timestamp, exog: &[T]) -> Vec<T> {
        let u = T::of((t - self.t0) as f64 / self.span_minutes);
        let mut x = Vec::with_capacity(self.dim());
        x.push(u);
        x.extend(self.changepoints.iter().map(|&c| (u - c).max(T::zero())));
        let day = std::f64::consts::TAU * t.minute_of_day() as f64 / 1440.0;
        for k in 1..=self.fourier {
            let a = day * k as f64;
            x.push(T::of(a.sin()));
            x.push(T::of(a.cos()));
        }
        x.extend_from_slice(exog);
        x
    }

    pub fn components(&self, t: Timestamp, exog: &[T]) -> Components<T> {
        let x = self.features(t, exog);
        let c = &self.fit.coef;
        let n_trend = 1 + self.changepoints.len();
        let n_seas = 2 * self.fourier;
        let dot = |r: std::ops::Range<usize>| r.map(|j| c[j] * x[j]).sum::<T>();
        Components {
            trend: self.fit.intercept + dot(0..n_trend),
            seasonal: dot(n_trend..n_trend + n_seas),
            exogenous: dot(n_trend + n_seas..x.len()),
        }
    }

    pub fn predict(&self, t: Timestamp, exog: &[T]) -> T {
        self.fit.predict(&self.features(t, exog))
    }
}
