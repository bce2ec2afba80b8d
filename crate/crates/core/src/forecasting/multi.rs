//! Predicts second-floor sensors from the fireplace temperature alone.
//!
//! Each target gets a ridge regressor and a boosted-tree regressor over the
//! same lagged fireplace features; their outputs are weight-averaged by
//! validation RMSE.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::gbm::{fit_gbm, Gbm, GbmParams};
use super::linalg::{ridge, LinearFit};
use super::{rmse, weight_average, ForecastError, DEFAULT_P};
use crate::scalar::Scalar;
use crate::series::TimeSeries;

/// Second-floor channels reconstructed from the fireplace sensor.
pub const SECOND_FLOOR_TARGETS: [&str; 8] = [
    "2BalconyEntrance",
    "2Cooking",
    "2LivingRoomCenter",
    "2LivingRoomCenterHumidity",
    "2LivingRoomHumidifier",
    "2LRWindow",
    "2OfficeDesk",
    "2Stair",
];

/// Sensor whose temperature drives the predictions.
pub const FIREPLACE_SENSOR: &str = "2Fireplace";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiOutputParams {
    /// Fireplace values at lags `0..lags` enter as features.
    pub lags: usize,
    pub ridge_lambda: f64,
    pub gbm: GbmParams,
    /// Trailing share of rows held out to score the two regressors.
    pub validation_fraction: f64,
    pub p: f64,
}

impl Default for MultiOutputParams {
    fn default() -> Self {
        MultiOutputParams {
            lags: 24,
            ridge_lambda: 1e-6,
            gbm: GbmParams { n_trees: 60, depth: 3, learning_rate: 0.1, subsample: 1.0, min_leaf: 10, seed: 0 },
            validation_fraction: 0.2,
            p: DEFAULT_P,
        }
    }
}

/// Fireplace series, observed or itself forecast, plus the targets wanted.
#[derive(Debug, Clone)]
pub struct MultiOutputRequest<T> {
    pub fireplace: TimeSeries<T>,
    pub targets: Vec<String>,
}

impl<T: Scalar> MultiOutputRequest<T> {
    pub fn all_targets(fireplace: TimeSeries<T>) -> Self {
        MultiOutputRequest { fireplace, targets: SECOND_FLOOR_TARGETS.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Debug, Clone)]
pub struct TargetModel<T> {
    pub ridge: LinearFit<T>,
    pub gbm: Gbm<T>,
    /// Validation RMSE of the ridge and boosted regressors, in that order.
    pub val_rmse: [T; 2],
}

impl<T: Scalar> TargetModel<T> {
    fn predict(&self, rows: &[Vec<T>], p: T) -> Result<Vec<T>, ForecastError> {
        let a: Vec<T> = rows.iter().map(|x| self.ridge.predict(x)).collect();
        let b: Vec<T> = rows.iter().map(|x| self.gbm.predict(x)).collect();
        weight_average(&[a, b], &self.val_rmse, p)
    }
}

/// Per-target fitted regressors sharing one feature layout.
#[derive(Debug, Clone)]
pub struct MultiOutputModel<T> {
    pub params: MultiOutputParams,
    pub targets: BTreeMap<String, TargetModel<T>>,
}

/// Lagged fireplace values (edge-padded) and the minute-of-day phase.
pub fn fireplace_features<T: Scalar>(fireplace: &TimeSeries<T>, lags: usize) -> Vec<Vec<T>> {
    let v = &fireplace.values;
    (0..v.len())
        .map(|i| {
            let mut x: Vec<T> = (0..lags).map(|l| v[i.saturating_sub(l)]).collect();
            let day = std::f64::consts::TAU * fireplace.time_at(i).minute_of_day() as f64 / 1440.0;
            x.push(T::of(day.sin()));
            x.push(T::of(day.cos()));
            x
        })
        .collect()
}

fn fit_pair<T: Scalar>(x: &[Vec<T>], y: &[T], params: &MultiOutputParams) -> Result<(LinearFit<T>, Gbm<T>), ForecastError> {
    let dim = x[0].len();
    let lin = ridge(x.iter().cloned().zip(y.iter().copied()), dim, T::of(params.ridge_lambda))
        .ok_or_else(|| ForecastError::Degenerate("singular fireplace design".into()))?;
    let gbm = fit_gbm(x, y, &params.gbm)?;
    Ok((lin, gbm))
}

impl<T: Scalar> MultiOutputModel<T> {
    /// Fits every target in `targets` against `fireplace`; samples are matched by timestamp.
    pub fn fit(fireplace: &TimeSeries<T>, targets: &BTreeMap<String, TimeSeries<T>>, params: MultiOutputParams) -> Result<Self, ForecastError> {
        if params.lags == 0 {
            return Err(ForecastError::InvalidHyperparameter("lags must be at least 1".into()));
        }
        if !(params.validation_fraction > 0.0 && params.validation_fraction < 1.0) {
            return Err(ForecastError::InvalidHyperparameter("validation_fraction must lie in (0, 1)".into()));
        }
        if fireplace.values.iter().any(|v| !v.is_finite()) {
            return Err(ForecastError::InvalidInput("non-finite fireplace value".into()));
        }
        let features = fireplace_features(fireplace, params.lags);
        let fitted = std::thread::scope(|scope| {
            let handles: Vec<_> = targets
                .iter()
                .map(|(name, series)| {
                    let features = &features;
                    scope.spawn(move || {
                        let (x, y): (Vec<Vec<T>>, Vec<T>) = (0..fireplace.len())
                            .filter_map(|i| {
                                let j = series.index_of(fireplace.time_at(i))?;
                                let v = series.values[j];
                                v.is_finite().then(|| (features[i].clone(), v))
                            })
                            .unzip();
                        let cut = ((y.len() as f64) * (1.0 - params.validation_fraction)).round() as usize;
                        if cut < 20 || cut >= y.len() {
                            return Err(ForecastError::TooFewRows { needed: 40, actual: y.len() });
                        }
                        let (lin, gbm) = fit_pair(&x[..cut], &y[..cut], &params)?;
                        let held = &y[cut..];
                        let pl: Vec<T> = x[cut..].iter().map(|r| lin.predict(r)).collect();
                        let pg: Vec<T> = x[cut..].iter().map(|r| gbm.predict(r)).collect();
                        let val_rmse = [rmse(&pl, held)?, rmse(&pg, held)?];
                        let (ridge, gbm) = fit_pair(&x, &y, &params)?;
                        Ok((name.clone(), TargetModel { ridge, gbm, val_rmse }))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("target fit panicked")).collect::<Result<BTreeMap<_, _>, ForecastError>>()
        })?;
        Ok(MultiOutputModel { params, targets: fitted })
    }
}

/// Predicts each requested target over the fireplace series' grid.
pub fn predict_multi_output<T: Scalar>(
    request: &MultiOutputRequest<T>,
    model: &MultiOutputModel<T>,
) -> Result<BTreeMap<String, TimeSeries<T>>, ForecastError> {
    if let Some(bad) = request.targets.iter().find(|t| !model.targets.contains_key(*t)) {
        return Err(ForecastError::UnknownTarget(bad.clone()));
    }
    if request.fireplace.values.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::InvalidInput("non-finite fireplace value".into()));
    }
    let rows = fireplace_features(&request.fireplace, model.params.lags);
    let p = T::of(model.params.p);
    request
        .targets
        .iter()
        .map(|name| {
            let values = model.targets[name].predict(&rows, p)?;
            let fp = &request.fireplace;
            Ok((name.clone(), TimeSeries::new(name.clone(), fp.start, fp.step_minutes, values)))
        })
        .collect()
}
