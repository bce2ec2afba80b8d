//! Day-ahead forecasting pipeline: grid search per model family, stacking,
//! inverse-RMSE ensembling and evaluation against the random-walk baseline.

use std::collections::BTreeMap;
use std::thread;

use serde::{Deserialize, Serialize};

use super::ensemble::WeightedEnsemble;
use super::gbm::GbmParams;
use super::model::{recursive_forecast, BaseModelSpec, Exogenous, FittedModel, ForecastRequest, ModelKind};
use super::prophet::ProphetParams;
use super::transform::TransformKind;
use super::{rmse, ForecastError, DEFAULT_P};
use crate::scalar::Scalar;
use crate::series::{split, TimeSeries};

/// Candidate hyperparameters searched for each family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastGrid {
    pub arima: Vec<[usize; 3]>,
    pub prophet: Vec<ProphetParams>,
    pub gbm: Vec<GbmParams>,
    pub gbm_transforms: Vec<TransformKind>,
}

impl Default for ForecastGrid {
    fn default() -> Self {
        ForecastGrid {
            arima: vec![[2, 0, 0], [2, 1, 1], [3, 1, 0]],
            prophet: vec![
                ProphetParams { n_changepoints: 5, fourier_daily: 3, ridge_lambda: 1e-3 },
                ProphetParams { n_changepoints: 10, fourier_daily: 6, ridge_lambda: 1e-3 },
            ],
            gbm: vec![GbmParams { n_trees: 100, depth: 3, learning_rate: 0.1, subsample: 0.8, min_leaf: 20, seed: 7 }],
            gbm_transforms: vec![TransformKind::DifferenceOrder1, TransformKind::None],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub train_days: usize,
    pub val_days: usize,
    pub test_days: usize,
    pub horizon_steps: usize,
    pub folds: usize,
    pub p: f64,
    pub grid: ForecastGrid,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { train_days: 70, val_days: 10, test_days: 10, horizon_steps: 288, folds: 5, p: DEFAULT_P, grid: ForecastGrid::default() }
    }
}

impl ForecastGrid {
    /// Every candidate spec of `kind`; stacks are assembled separately.
    pub fn candidates<T: Scalar>(&self, kind: ModelKind) -> Result<Vec<BaseModelSpec<T>>, ForecastError> {
        let specs = match kind {
            ModelKind::Arima => self
                .arima
                .iter()
                .map(|&[p, d, q]| BaseModelSpec::arima(p, d, q).map(|s| s.named(format!("arima({p},{d},{q})"))))
                .collect::<Result<Vec<_>, _>>()?,
            ModelKind::ProphetLite => self
                .prophet
                .iter()
                .map(|pp| {
                    BaseModelSpec::prophet(pp).map(|s| s.named(format!("prophet(cp={},f={})", pp.n_changepoints, pp.fourier_daily)))
                })
                .collect::<Result<Vec<_>, _>>()?,
            ModelKind::Gbm => {
                let mut out = Vec::new();
                for g in &self.gbm {
                    for &t in &self.gbm_transforms {
                        let tag = match t {
                            TransformKind::None => "raw",
                            TransformKind::DifferenceOrder1 => "diff",
                            TransformKind::Standardize => "std",
                        };
                        out.push(BaseModelSpec::gbm(g)?.with_transform(t)?.named(format!("gbm(d={},n={},{tag})", g.depth, g.n_trees)));
                    }
                }
                out
            }
            ModelKind::RandomWalkBaseline => vec![BaseModelSpec::random_walk()],
            ModelKind::PluggableExternal | ModelKind::Stacked => Vec::new(),
        };
        Ok(specs)
    }
}

/// RMSE of consecutive day-ahead forecasts issued at the start of each of `days`
/// days beginning at `from`, each using all true history before it.
pub fn day_ahead_rmse<T: Scalar, F>(forecast: F, series: &TimeSeries<T>, exog: &Exogenous<T>, from: usize, days: usize, horizon: usize) -> Result<T, ForecastError>
where
    F: Fn(&ForecastRequest<T>) -> Result<TimeSeries<T>, ForecastError>,
{
    let (pred, truth) = day_ahead_paths(forecast, series, exog, from, days, horizon)?;
    rmse(&pred, &truth)
}

fn day_ahead_paths<T: Scalar, F>(forecast: F, series: &TimeSeries<T>, exog: &Exogenous<T>, from: usize, days: usize, horizon: usize) -> Result<(Vec<T>, Vec<T>), ForecastError>
where
    F: Fn(&ForecastRequest<T>) -> Result<TimeSeries<T>, ForecastError>,
{
    let per_day = series.steps_per_day();
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for d in 0..days {
        let origin = from + d * per_day;
        let end = (origin + horizon).min(series.len());
        if end <= origin {
            break;
        }
        let req = ForecastRequest { history: series.slice(0..origin), horizon_steps: end - origin, exogenous: exog.clone() };
        pred.extend(forecast(&req)?.values);
        truth.extend_from_slice(&series.values[origin..end]);
    }
    Ok((pred, truth))
}

/// A fitted model with its validation score.
#[derive(Debug, Clone)]
pub struct ScoredModel<T> {
    pub model: FittedModel<T>,
    pub val_rmse: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    pub kind: ModelKind,
    pub val_rmse: f64,
}

/// Fits each candidate on `train` and scores it on the `val_days` days after `train`.
fn score_candidates<T: Scalar>(
    specs: &[BaseModelSpec<T>],
    train: &TimeSeries<T>,
    full: &TimeSeries<T>,
    exog: &Exogenous<T>,
    val_days: usize,
    horizon: usize,
) -> Vec<Result<ScoredModel<T>, ForecastError>> {
    thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| {
                scope.spawn(move || {
                    let model = FittedModel::fit(spec, train, exog)
                        .map_err(|e| ForecastError::MemberFailed { member: spec.name.clone(), message: e.to_string() })?;
                    let val_rmse = day_ahead_rmse(|r| recursive_forecast(&model, r), full, exog, train.len(), val_days, horizon)?;
                    Ok(ScoredModel { model, val_rmse })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("candidate panicked")).collect()
    })
}

/// Best model per requested family, plus a stack of those winners when `Stacked` is requested.
#[derive(Debug, Clone)]
pub struct Selection<T> {
    pub chosen: Vec<ScoredModel<T>>,
    pub candidates: Vec<CandidateScore>,
}

/// Grid-searches each family in `kinds` on `train`, validating on the following `val_days`.
pub fn select_models<T: Scalar>(
    kinds: &[ModelKind],
    train: &TimeSeries<T>,
    full: &TimeSeries<T>,
    exog: &Exogenous<T>,
    val_days: usize,
    config: &PipelineConfig,
) -> Result<Selection<T>, ForecastError> {
    let mut chosen = Vec::new();
    let mut candidates = Vec::new();
    for &kind in kinds.iter().filter(|&&k| k != ModelKind::Stacked) {
        let specs = config.grid.candidates::<T>(kind)?;
        if specs.is_empty() {
            return Err(ForecastError::InvalidInput(format!("no grid candidates for {kind}")));
        }
        let mut best: Option<ScoredModel<T>> = None;
        let mut last_err = None;
        for (spec, scored) in specs.iter().zip(score_candidates(&specs, train, full, exog, val_days, config.horizon_steps)) {
            match scored {
                Ok(s) => {
                    candidates.push(CandidateScore { name: spec.name.clone(), kind, val_rmse: s.val_rmse.as_f64() });
                    if best.as_ref().is_none_or(|b| s.val_rmse < b.val_rmse) {
                        best = Some(s);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        match best {
            Some(b) => chosen.push(b),
            None => return Err(last_err.expect("at least one candidate")),
        }
    }
    if kinds.contains(&ModelKind::Stacked) {
        let members: Vec<BaseModelSpec<T>> = chosen
            .iter()
            .filter(|s| s.model.spec().kind != ModelKind::RandomWalkBaseline)
            .map(|s| s.model.spec().clone())
            .collect();
        if members.is_empty() {
            return Err(ForecastError::InvalidInput("stack needs at least one non-baseline family".into()));
        }
        let spec = BaseModelSpec::stacked(members, config.folds)?.named("stack");
        let scored = score_candidates(std::slice::from_ref(&spec), train, full, exog, val_days, config.horizon_steps)
            .pop()
            .expect("one candidate")?;
        candidates.push(CandidateScore { name: spec.name.clone(), kind: ModelKind::Stacked, val_rmse: scored.val_rmse.as_f64() });
        chosen.push(scored);
    }
    Ok(Selection { chosen, candidates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub candidates: Vec<CandidateScore>,
    /// `(name, validation RMSE, ensemble weight, test RMSE)` per ensemble member.
    pub members: Vec<(String, f64, f64, f64)>,
    pub ensemble_test_rmse: f64,
    pub baseline_test_rmse: f64,
}

/// Splits `series`, selects and stacks models, and scores the ensemble and the
/// random walk on day-ahead forecasts over the test days.
pub fn run_benchmark<T: Scalar>(series: &TimeSeries<T>, exog: &Exogenous<T>, config: &PipelineConfig) -> Result<BenchmarkReport, ForecastError> {
    let parts = split(series, config.train_days, config.val_days, config.test_days)?;
    let full = series.slice(0..parts.train.len() + parts.validation.len() + parts.test.len());
    let kinds = [ModelKind::Arima, ModelKind::ProphetLite, ModelKind::Gbm, ModelKind::Stacked];
    let selection = select_models(&kinds, &parts.train, &full, exog, config.val_days, config)?;
    let (models, val): (Vec<_>, Vec<_>) = selection.chosen.into_iter().map(|s| (s.model, s.val_rmse)).unzip();
    let ensemble = WeightedEnsemble::new(models, val.clone(), T::of(config.p))?;
    let test_from = parts.train.len() + parts.validation.len();
    let h = config.horizon_steps;

    let member_paths: Vec<(Vec<T>, Vec<T>)> = thread::scope(|scope| {
        let handles: Vec<_> = ensemble
            .members()
            .iter()
            .map(|m| scope.spawn(|| day_ahead_paths(|r| recursive_forecast(m, r), &full, exog, test_from, config.test_days, h)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("forecast panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    let truth = member_paths[0].1.clone();
    let preds: Vec<Vec<T>> = member_paths.iter().map(|(p, _)| p.clone()).collect();
    // Averaging whole test paths equals averaging each day's paths.
    let combined = super::weight_average(&preds, &val, T::of(config.p))?;
    let baseline = FittedModel::fit(&BaseModelSpec::random_walk(), &parts.train, exog)?;
    let baseline_rmse = day_ahead_rmse(|r| recursive_forecast(&baseline, r), &full, exog, test_from, config.test_days, h)?;

    let weights = ensemble.weights();
    let members = ensemble
        .members()
        .iter()
        .zip(&val)
        .zip(&weights)
        .zip(&preds)
        .map(|(((m, v), w), p)| Ok((m.name().to_string(), v.as_f64(), w.as_f64(), rmse(p, &truth)?.as_f64())))
        .collect::<Result<Vec<_>, ForecastError>>()?;
    Ok(BenchmarkReport {
        candidates: selection.candidates,
        members,
        ensemble_test_rmse: rmse(&combined, &truth)?.as_f64(),
        baseline_test_rmse: baseline_rmse.as_f64(),
    })
}

/// Per-model and ensemble forecasts continuing a history.
#[derive(Debug, Clone)]
pub struct ForecastBundle<T> {
    pub members: BTreeMap<String, TimeSeries<T>>,
    pub ensemble: TimeSeries<T>,
    pub weights: BTreeMap<String, T>,
    pub candidates: Vec<CandidateScore>,
}

/// Fits the requested families on all but the last `config.val_days` days of
/// `history`, weights them by day-ahead RMSE on those days, then forecasts
/// `horizon` steps past the end of `history`.
pub fn forecast_bundle<T: Scalar>(
    history: &TimeSeries<T>,
    exog: &Exogenous<T>,
    kinds: &[ModelKind],
    horizon: usize,
    config: &PipelineConfig,
) -> Result<ForecastBundle<T>, ForecastError> {
    if kinds.is_empty() {
        return Err(ForecastError::InvalidInput("no model families requested".into()));
    }
    let per_day = history.steps_per_day();
    let val_len = config.val_days * per_day;
    if config.val_days == 0 || history.len() < val_len + 3 * per_day {
        return Err(ForecastError::HistoryTooShort { needed: val_len + 3 * per_day, actual: history.len() });
    }
    let train = history.slice(0..history.len() - val_len);
    let selection = select_models(kinds, &train, history, exog, config.val_days, config)?;
    let (models, val): (Vec<_>, Vec<_>) = selection.chosen.into_iter().map(|s| (s.model, s.val_rmse)).unzip();
    let ensemble = WeightedEnsemble::new(models, val, T::of(config.p))?;
    let request = ForecastRequest { history: history.clone(), horizon_steps: horizon, exogenous: exog.clone() };
    let paths = ensemble.member_forecasts(&request)?;
    let values: Vec<Vec<T>> = paths.iter().map(|s| s.values.clone()).collect();
    let mut combined = paths[0].clone();
    combined.values = super::weight_average(&values, ensemble.val_rmse(), ensemble.p())?;
    let names: Vec<String> = ensemble.members().iter().map(|m| m.name().to_string()).collect();
    Ok(ForecastBundle {
        members: names.iter().cloned().zip(paths).collect(),
        ensemble: combined,
        weights: names.into_iter().zip(ensemble.weights()).collect(),
        candidates: selection.candidates,
    })
}
