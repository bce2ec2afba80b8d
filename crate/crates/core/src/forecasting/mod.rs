//! Base forecasters, stacking, the weight-averaging ensemble and the
//! fireplace-driven multi-output predictor.

mod arima;
pub mod ensemble;
pub mod gbm;
pub(crate) mod linalg;
pub mod model;
pub mod multi;
pub mod pipeline;
mod prophet;
pub mod stack;
pub mod transform;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::series::SeriesError;

pub use ensemble::WeightedEnsemble;
pub use gbm::{fit_gbm, Gbm, GbmParams};
pub use linalg::LinearFit;
pub use model::{
    recursive_forecast, BaseModelSpec, ExternalModel, ExternalModelFactory, Exogenous, FittedModel, ForecastRequest,
    ModelKind, SeriesContext,
};
pub use prophet::{Components, ProphetParams};
pub use multi::{predict_multi_output, MultiOutputModel, MultiOutputParams, MultiOutputRequest, FIREPLACE_SENSOR, SECOND_FLOOR_TARGETS};
pub use stack::{stack, StackReport};
pub use transform::{FittedTransform, TransformKind};

/// Smallest validation RMSE admitted into an inverse-RMSE weight.
pub const RMSE_FLOOR: f64 = 1e-9;
/// Default weight exponent.
pub const DEFAULT_P: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("unknown hyperparameter `{key}` for {kind}")]
    UnknownHyperparameter { kind: String, key: String },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("too few rows: need {needed}, have {actual}")]
    TooFewRows { needed: usize, actual: usize },
    #[error("history too short: need {needed} steps, have {actual}")]
    HistoryTooShort { needed: usize, actual: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("member `{member}` failed: {message}")]
    MemberFailed { member: String, message: String },
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("missing exogenous series `{0}`")]
    MissingExogenous(String),
    #[error("external model: {0}")]
    External(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Root mean squared difference of two equal-length vectors.
pub fn rmse<T: Scalar>(a: &[T], b: &[T]) -> Result<T, ForecastError> {
    if a.len() != b.len() {
        return Err(ForecastError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(ForecastError::InvalidInput("rmse of empty vectors".into()));
    }
    let ss: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok((ss / T::of_usize(a.len())).sqrt())
}

/// Inverse-RMSE weights `1 / max(rmse, RMSE_FLOOR)^p`, normalized to sum to one.
pub fn inverse_rmse_weights<T: Scalar>(val_rmse: &[T], p: T) -> Vec<T> {
    let floor = T::of(RMSE_FLOOR);
    // Divide by the smallest RMSE first so large `p` cannot overflow.
    let best = val_rmse.iter().map(|&r| if r > floor { r } else { floor }).fold(T::infinity(), T::min);
    let raw: Vec<T> = val_rmse
        .iter()
        .map(|&r| {
            let r = if r > floor { r } else { floor };
            (best / r).powf(p)
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Elementwise `sum_i w_i * preds_i / sum_i w_i` with `w_i = 1 / val_rmse_i^p`.
pub fn weight_average<T: Scalar>(preds: &[Vec<T>], val_rmse: &[T], p: T) -> Result<Vec<T>, ForecastError> {
    if preds.is_empty() {
        return Err(ForecastError::InvalidInput("no members to average".into()));
    }
    if preds.len() != val_rmse.len() {
        return Err(ForecastError::LengthMismatch { left: preds.len(), right: val_rmse.len() });
    }
    if !(p > T::zero()) {
        return Err(ForecastError::InvalidHyperparameter(format!("p must be positive, got {p}")));
    }
    let len = preds[0].len();
    if let Some(bad) = preds.iter().find(|v| v.len() != len) {
        return Err(ForecastError::LengthMismatch { left: len, right: bad.len() });
    }
    if preds.len() == 1 {
        return Ok(preds[0].clone());
    }
    let w = inverse_rmse_weights(val_rmse, p);
    Ok((0..len).map(|j| preds.iter().zip(&w).map(|(v, &wi)| wi * v[j]).sum()).collect())
}
