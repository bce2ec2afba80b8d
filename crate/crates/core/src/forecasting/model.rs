//! Model specifications, fitted models and recursive multi-step forecasting.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::arima::{ArimaFit, MAX_ORDER, RESIDUAL_WINDOW};
use super::gbm::{fit_gbm, Gbm, GbmParams};
use super::linalg::LinearFit;
use super::prophet::{Components, ProphetFit, ProphetParams};
use super::stack::StackedFit;
use super::transform::{FittedTransform, TransformKind};
use super::ForecastError;
use crate::scalar::Scalar;
use crate::series::TimeSeries;
use crate::time::Timestamp;

/// Autoregressive lags (in steps) used by the boosted-tree forecaster; the last is one day.
pub const GBM_LAGS: [usize; 7] = [1, 2, 3, 6, 12, 24, 288];

/// Named exogenous regressors, looked up by timestamp.
pub type Exogenous<T> = BTreeMap<String, TimeSeries<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Arima,
    ProphetLite,
    Gbm,
    RandomWalkBaseline,
    PluggableExternal,
    Stacked,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Arima => "arima",
            ModelKind::ProphetLite => "prophet-lite",
            ModelKind::Gbm => "gbm",
            ModelKind::RandomWalkBaseline => "random-walk-baseline",
            ModelKind::PluggableExternal => "pluggable-external",
            ModelKind::Stacked => "stacked",
        }
    }

    fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            ModelKind::Arima => &[("p", 1.0), ("d", 0.0), ("q", 0.0)],
            ModelKind::ProphetLite => &[("n_changepoints", 5.0), ("fourier_daily", 3.0), ("ridge_lambda", 1e-3)],
            ModelKind::Gbm => &[
                ("n_trees", 100.0),
                ("depth", 3.0),
                ("learning_rate", 0.1),
                ("subsample", 1.0),
                ("min_leaf", 5.0),
                ("seed", 0.0),
            ],
            ModelKind::RandomWalkBaseline | ModelKind::PluggableExternal => &[],
            ModelKind::Stacked => &[("k", 5.0), ("meta_lambda", 1e-3)],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "arima" => ModelKind::Arima,
            "prophet" | "prophet-lite" => ModelKind::ProphetLite,
            "gbm" => ModelKind::Gbm,
            "random-walk" | "random-walk-baseline" | "baseline" => ModelKind::RandomWalkBaseline,
            "pluggable-external" | "external" => ModelKind::PluggableExternal,
            "stack" | "stacked" => ModelKind::Stacked,
            other => return Err(ForecastError::InvalidInput(format!("unknown model kind `{other}`"))),
        })
    }
}

/// Lookup of time-aligned data for a series whose index 0 sits at `start`.
#[derive(Debug, Clone, Copy)]
pub struct SeriesContext<'a, T> {
    pub start: Timestamp,
    pub step_minutes: u32,
    pub exogenous: &'a Exogenous<T>,
}

impl<'a, T: Scalar> SeriesContext<'a, T> {
    pub fn for_series(series: &TimeSeries<T>, exogenous: &'a Exogenous<T>) -> Self {
        SeriesContext { start: series.start, step_minutes: series.step_minutes, exogenous }
    }

    pub fn time_at(&self, index: usize) -> Timestamp {
        self.start + index as i64 * self.step_minutes as i64
    }

    /// Latest value of `name` at or before the time of `index`.
    pub fn exog(&self, name: &str, index: usize) -> Result<T, ForecastError> {
        self.exogenous
            .get(name)
            .and_then(|s| s.value_at_or_before(self.time_at(index)))
            .filter(|v| v.is_finite())
            .ok_or_else(|| ForecastError::MissingExogenous(name.to_string()))
    }

    fn exog_row(&self, names: &[String], index: usize) -> Result<Vec<T>, ForecastError> {
        names.iter().map(|n| self.exog(n, index)).collect()
    }
}

/// A forecaster supplied from outside this crate, operating on transformed values.
pub trait ExternalModel<T>: Send + Sync + fmt::Debug {
    /// Transformed samples needed before the first prediction.
    fn lookback(&self) -> usize;
    /// Predicts the transformed value following `z`, whose first entry sits at `z_start`.
    fn predict_next(&self, z: &[T], z_start: usize, ctx: &SeriesContext<'_, T>) -> T;
}

/// Trains [`ExternalModel`]s; lets a new family join stacks and ensembles unchanged.
pub trait ExternalModelFactory<T>: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn lookback(&self, hyperparameters: &BTreeMap<String, f64>) -> usize;
    /// Fits on the transformed targets `z[i]` for `i` in `rows`.
    fn fit(
        &self,
        z: &[T],
        rows: &[usize],
        ctx: &SeriesContext<'_, T>,
        hyperparameters: &BTreeMap<String, f64>,
    ) -> Result<Arc<dyn ExternalModel<T>>, String>;
}

/// What to fit. Hyperparameters are validated per kind on construction.
#[derive(Clone)]
pub struct BaseModelSpec<T> {
    pub name: String,
    pub kind: ModelKind,
    pub hyperparameters: BTreeMap<String, f64>,
    pub transform: TransformKind,
    pub exogenous: Vec<String>,
    /// Level-one members; non-empty exactly for [`ModelKind::Stacked`].
    pub members: Vec<BaseModelSpec<T>>,
    pub external: Option<Arc<dyn ExternalModelFactory<T>>>,
}

impl<T> fmt::Debug for BaseModelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BaseModelSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("hyperparameters", &self.hyperparameters)
            .field("transform", &self.transform)
            .field("exogenous", &self.exogenous)
            .field("members", &self.members)
            .field("external", &self.external.as_ref().map(|e| e.name().to_string()))
            .finish()
    }
}

fn as_count(key: &str, v: f64, lo: usize, hi: usize) -> Result<usize, ForecastError> {
    if v.fract() != 0.0 || v < lo as f64 || v > hi as f64 {
        return Err(ForecastError::InvalidHyperparameter(format!("{key} = {v} must be an integer in [{lo}, {hi}]")));
    }
    Ok(v as usize)
}

impl<T: Scalar> BaseModelSpec<T> {
    /// Fills defaults for missing keys and rejects unknown or out-of-range ones.
    pub fn new(kind: ModelKind, hyperparameters: BTreeMap<String, f64>, transform: TransformKind) -> Result<Self, ForecastError> {
        let mut hp: BTreeMap<String, f64> = kind.defaults().iter().map(|&(k, v)| (k.to_string(), v)).collect();
        for (k, v) in hyperparameters {
            if kind != ModelKind::PluggableExternal && !hp.contains_key(&k) {
                return Err(ForecastError::UnknownHyperparameter { kind: kind.name().into(), key: k });
            }
            if !v.is_finite() {
                return Err(ForecastError::InvalidHyperparameter(format!("{k} must be finite")));
            }
            hp.insert(k, v);
        }
        let spec = BaseModelSpec {
            name: kind.name().to_string(),
            kind,
            hyperparameters: hp,
            transform,
            exogenous: Vec::new(),
            members: Vec::new(),
            external: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn arima(p: usize, d: usize, q: usize) -> Result<Self, ForecastError> {
        let hp = [("p", p), ("d", d), ("q", q)].map(|(k, v)| (k.to_string(), v as f64));
        Self::new(ModelKind::Arima, hp.into(), TransformKind::None)
    }

    pub fn prophet(params: &ProphetParams) -> Result<Self, ForecastError> {
        let hp = BTreeMap::from([
            ("n_changepoints".to_string(), params.n_changepoints as f64),
            ("fourier_daily".to_string(), params.fourier_daily as f64),
            ("ridge_lambda".to_string(), params.ridge_lambda),
        ]);
        Self::new(ModelKind::ProphetLite, hp, TransformKind::None)
    }

    pub fn gbm(params: &GbmParams) -> Result<Self, ForecastError> {
        let hp = BTreeMap::from([
            ("n_trees".to_string(), params.n_trees as f64),
            ("depth".to_string(), params.depth as f64),
            ("learning_rate".to_string(), params.learning_rate),
            ("subsample".to_string(), params.subsample),
            ("min_leaf".to_string(), params.min_leaf as f64),
            ("seed".to_string(), params.seed as f64),
        ]);
        Self::new(ModelKind::Gbm, hp, TransformKind::None)
    }

    pub fn random_walk() -> Self {
        Self::new(ModelKind::RandomWalkBaseline, BTreeMap::new(), TransformKind::None).expect("no hyperparameters")
    }

    pub fn external(factory: Arc<dyn ExternalModelFactory<T>>, hyperparameters: BTreeMap<String, f64>) -> Result<Self, ForecastError> {
        let mut spec = Self::new(ModelKind::PluggableExternal, hyperparameters, TransformKind::None)?;
        spec.name = factory.name().to_string();
        spec.external = Some(factory);
        Ok(spec)
    }

    pub fn stacked(members: Vec<BaseModelSpec<T>>, k: usize) -> Result<Self, ForecastError> {
        let mut spec = Self::new(ModelKind::Stacked, BTreeMap::from([("k".to_string(), k as f64)]), TransformKind::None)?;
        spec.members = members;
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_transform(mut self, transform: TransformKind) -> Result<Self, ForecastError> {
        self.transform = transform;
        self.validate()?;
        Ok(self)
    }

    pub fn with_exogenous(mut self, names: Vec<String>) -> Result<Self, ForecastError> {
        self.exogenous = names;
        self.validate()?;
        Ok(self)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn hp(&self, key: &str) -> f64 {
        self.hyperparameters[key]
    }

    fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::InvalidHyperparameter(m));
        if !self.exogenous.is_empty() && !matches!(self.kind, ModelKind::ProphetLite | ModelKind::Gbm) {
            return bad(format!("{} does not accept exogenous regressors", self.kind));
        }
        if self.kind != ModelKind::Stacked && !self.members.is_empty() {
            return bad(format!("{} cannot have members", self.kind));
        }
        match self.kind {
            ModelKind::Arima => {
                as_count("p", self.hp("p"), 0, MAX_ORDER)?;
                as_count("d", self.hp("d"), 0, 2)?;
                as_count("q", self.hp("q"), 0, MAX_ORDER)?;
            }
            ModelKind::ProphetLite => {
                as_count("n_changepoints", self.hp("n_changepoints"), 0, 50)?;
                as_count("fourier_daily", self.hp("fourier_daily"), 0, 20)?;
                if self.hp("ridge_lambda") < 0.0 {
                    return bad("ridge_lambda must be non-negative".into());
                }
            }
            ModelKind::Gbm => {
                as_count("n_trees", self.hp("n_trees"), 1, 100_000)?;
                as_count("depth", self.hp("depth"), 1, 6)?;
                as_count("min_leaf", self.hp("min_leaf"), 1, 1_000_000)?;
                if self.hp("seed") < 0.0 || self.hp("seed").fract() != 0.0 {
                    return bad("seed must be a non-negative integer".into());
                }
                self.gbm_params().validate()?;
            }
            ModelKind::RandomWalkBaseline => {
                if self.transform != TransformKind::None {
                    return bad("random-walk-baseline takes no transform".into());
                }
            }
            ModelKind::PluggableExternal => {}
            ModelKind::Stacked => {
                as_count("k", self.hp("k"), 2, 1000)?;
                if self.hp("meta_lambda") < 0.0 {
                    return bad("meta_lambda must be non-negative".into());
                }
            }
        }
        Ok(())
    }

    /// `(p, d, q)`; meaningful for ARIMA specs only.
    pub fn arima_order(&self) -> (usize, usize, usize) {
        (self.hp("p") as usize, self.hp("d") as usize, self.hp("q") as usize)
    }

    pub fn prophet_params(&self) -> ProphetParams {
        ProphetParams {
            n_changepoints: self.hp("n_changepoints") as usize,
            fourier_daily: self.hp("fourier_daily") as usize,
            ridge_lambda: self.hp("ridge_lambda"),
        }
    }

    pub fn gbm_params(&self) -> GbmParams {
        GbmParams {
            n_trees: self.hp("n_trees") as usize,
            depth: self.hp("depth") as usize,
            learning_rate: self.hp("learning_rate"),
            subsample: self.hp("subsample"),
            min_leaf: self.hp("min_leaf") as usize,
            seed: self.hp("seed") as u64,
        }
    }

    pub fn folds(&self) -> usize {
        self.hp("k") as usize
    }

    pub fn meta_lambda(&self) -> f64 {
        self.hp("meta_lambda")
    }

    /// Differencing applied by the transform plus any ARIMA integration.
    pub fn diff_order(&self) -> usize {
        let base = usize::from(self.transform == TransformKind::DifferenceOrder1);
        base + if self.kind == ModelKind::Arima { self.arima_order().1 } else { 0 }
    }

    /// Raw samples required before the first one-step prediction.
    pub fn lookback(&self) -> usize {
        self.first_row().max(1)
    }

    /// Earliest index usable as a training target.
    pub fn first_row(&self) -> usize {
        let d = self.diff_order();
        match self.kind {
            ModelKind::RandomWalkBaseline => 1,
            ModelKind::Arima => {
                let (p, _, q) = self.arima_order();
                d + p.max(q)
            }
            ModelKind::ProphetLite => d,
            ModelKind::Gbm => d + GBM_LAGS[GBM_LAGS.len() - 1],
            ModelKind::PluggableExternal => d + self.external.as_ref().map_or(0, |f| f.lookback(&self.hyperparameters)),
            ModelKind::Stacked => self.members.iter().map(|m| m.lookback()).max().unwrap_or(0).max(d + 1),
        }
    }
}

/// Which stretch of which series a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingWindow {
    pub sensor_id: String,
    pub start: Timestamp,
    pub step_minutes: u32,
    pub len: usize,
    /// Number of target rows entering the fit.
    pub rows: usize,
    pub first_row: usize,
    pub last_row: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum State<T> {
    RandomWalk,
    Arima(ArimaFit<T>),
    Prophet(ProphetFit<T>),
    Gbm(Gbm<T>),
    External(Arc<dyn ExternalModel<T>>),
    Stacked(StackedFit<T>),
}

/// Immutable fitted forecaster; prediction is deterministic.
#[derive(Debug, Clone)]
pub struct FittedModel<T> {
    pub(crate) spec: BaseModelSpec<T>,
    pub(crate) transform: FittedTransform<T>,
    pub(crate) state: State<T>,
    pub(crate) window: TrainingWindow,
}

fn gbm_features<T: Scalar>(z: &[T], i: usize, ctx: &SeriesContext<'_, T>, exog: &[String]) -> Result<Vec<T>, ForecastError> {
    let mut x: Vec<T> = GBM_LAGS.iter().map(|&l| z[i - l]).collect();
    let day = std::f64::consts::TAU * ctx.time_at(i).minute_of_day() as f64 / 1440.0;
    x.push(T::of(day.sin()));
    x.push(T::of(day.cos()));
    for name in exog {
        x.push(ctx.exog(name, i)?);
    }
    Ok(x)
}

impl<T: Scalar> FittedModel<T> {
    /// Fits on every row of `series` that has a full lag window.
    pub fn fit(spec: &BaseModelSpec<T>, series: &TimeSeries<T>, exogenous: &Exogenous<T>) -> Result<Self, ForecastError> {
        let rows: Vec<usize> = (spec.first_row()..series.len()).collect();
        Self::fit_rows(spec, series, exogenous, &rows)
    }

    /// Fits using only the targets at `rows`; other samples may still appear as lagged inputs.
    pub fn fit_rows(spec: &BaseModelSpec<T>, series: &TimeSeries<T>, exogenous: &Exogenous<T>, rows: &[usize]) -> Result<Self, ForecastError> {
        if let Some(i) = series.values.iter().position(|v| !v.is_finite()) {
            return Err(ForecastError::InvalidInput(format!("non-finite training value at index {i}")));
        }
        let lookback = spec.first_row();
        if let Some(&bad) = rows.iter().find(|&&i| i < lookback || i >= series.len()) {
            return Err(ForecastError::InvalidInput(format!(
                "row {bad} outside [{lookback}, {}) for {}",
                series.len(),
                spec.name
            )));
        }
        if rows.is_empty() {
            return Err(ForecastError::TooFewRows { needed: 1, actual: 0 });
        }
        let ctx = SeriesContext::for_series(series, exogenous);
        let row_values: Vec<T> = rows.iter().map(|&i| series.values[i]).collect();
        let transform = FittedTransform::fit(spec.transform, &row_values, spec.diff_order() - usize::from(spec.transform == TransformKind::DifferenceOrder1));
        let z = transform.forward(&series.values);
        let state = match spec.kind {
            ModelKind::RandomWalkBaseline => State::RandomWalk,
            ModelKind::Arima => {
                let (p, _, q) = spec.arima_order();
                State::Arima(ArimaFit::fit(&z, rows, p, q)?)
            }
            ModelKind::ProphetLite => {
                let times: Vec<Timestamp> = rows.iter().map(|&i| ctx.time_at(i)).collect();
                let targets: Vec<T> = rows.iter().map(|&i| z[i]).collect();
                let exog = rows.iter().map(|&i| ctx.exog_row(&spec.exogenous, i)).collect::<Result<Vec<_>, _>>()?;
                State::Prophet(ProphetFit::fit(
                    &times,
                    ctx.step_minutes as i64,
                    &targets,
                    &exog,
                    spec.exogenous.clone(),
                    &spec.prophet_params(),
                )?)
            }
            ModelKind::Gbm => {
                let features = rows.iter().map(|&i| gbm_features(&z, i, &ctx, &spec.exogenous)).collect::<Result<Vec<_>, _>>()?;
                let targets: Vec<T> = rows.iter().map(|&i| z[i]).collect();
                State::Gbm(fit_gbm(&features, &targets, &spec.gbm_params())?)
            }
            ModelKind::PluggableExternal => {
                let factory = spec.external.as_ref().ok_or_else(|| ForecastError::External("no factory attached".into()))?;
                State::External(factory.fit(&z, rows, &ctx, &spec.hyperparameters).map_err(ForecastError::External)?)
            }
            ModelKind::Stacked => {
                return super::stack::stack_rows(spec, series, exogenous, rows).map(|(model, _)| model);
            }
        };
        Ok(FittedModel { spec: spec.clone(), transform, state, window: window_of(series, rows) })
    }

    /// AR(I)MA model with given coefficients and no fitted transform.
    pub fn arima_from_parts(c: T, ar: Vec<T>, ma: Vec<T>, d: usize) -> Result<Self, ForecastError> {
        let spec = BaseModelSpec::arima(ar.len(), d, ma.len())?;
        Ok(FittedModel {
            transform: FittedTransform { scale: None, diff_order: d },
            state: State::Arima(ArimaFit { c, ar, ma, sigma2: T::zero() }),
            window: TrainingWindow {
                sensor_id: String::new(),
                start: Timestamp::from_minutes(0),
                step_minutes: 5,
                len: 0,
                rows: 0,
                first_row: 0,
                last_row: 0,
            },
            spec,
        })
    }

    pub fn spec(&self) -> &BaseModelSpec<T> {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn transform(&self) -> &FittedTransform<T> {
        &self.transform
    }

    pub fn training_window(&self) -> &TrainingWindow {
        &self.window
    }

    pub fn lookback(&self) -> usize {
        match &self.state {
            State::External(m) => (self.transform.diff_order + m.lookback()).max(1),
            _ => self.spec.lookback(),
        }
    }

    /// `(c, ar, ma, residual variance)` for ARIMA models.
    pub fn arima_coefficients(&self) -> Option<(T, &[T], &[T], T)> {
        match &self.state {
            State::Arima(a) => Some((a.c, &a.ar, &a.ma, a.sigma2)),
            _ => None,
        }
    }

    pub fn gbm(&self) -> Option<&Gbm<T>> {
        match &self.state {
            State::Gbm(g) => Some(g),
            _ => None,
        }
    }

    pub fn stack_meta(&self) -> Option<&LinearFit<T>> {
        match &self.state {
            State::Stacked(s) => Some(&s.meta),
            _ => None,
        }
    }

    pub fn stack_members(&self) -> &[FittedModel<T>] {
        match &self.state {
            State::Stacked(s) => &s.members,
            _ => &[],
        }
    }

    /// Trend, seasonal and exogenous parts of a Prophet-lite fit at `t`, in transformed units.
    pub fn prophet_components(&self, t: Timestamp, exog: &[T]) -> Option<Components<T>> {
        match &self.state {
            State::Prophet(p) => Some(p.components(t, exog)),
            _ => None,
        }
    }

    /// Predicts `raw[raw.len()]` from the raw history; `ctx.start` is the time of `raw[0]`.
    pub fn predict_next(&self, raw: &[T], ctx: &SeriesContext<'_, T>) -> Result<T, ForecastError> {
        let n = raw.len();
        let needed = self.lookback();
        if n < needed {
            return Err(ForecastError::HistoryTooShort { needed, actual: n });
        }
        if let State::RandomWalk = self.state {
            return Ok(raw[n - 1]);
        }
        if let State::Stacked(s) = &self.state {
            return s.predict_next(&self.transform, raw, ctx);
        }
        let keep = (needed + RESIDUAL_WINDOW).min(n);
        let base = n - keep;
        let z = self.transform.forward(&raw[base..]);
        let z_next = match &self.state {
            State::Arima(a) => a.predict_next(&z),
            State::Prophet(p) => p.predict(ctx.time_at(n), &ctx.exog_row(&p.exog, n)?),
            State::Gbm(g) => {
                let mut x: Vec<T> = GBM_LAGS.iter().map(|&l| z[keep - l]).collect();
                let day = std::f64::consts::TAU * ctx.time_at(n).minute_of_day() as f64 / 1440.0;
                x.push(T::of(day.sin()));
                x.push(T::of(day.cos()));
                x.extend(ctx.exog_row(&self.spec.exogenous, n)?);
                g.predict(&x)
            }
            State::External(m) => m.predict_next(&z, base, ctx),
            State::RandomWalk | State::Stacked(_) => unreachable!("handled above"),
        };
        if !z_next.is_finite() {
            return Err(ForecastError::InvalidInput(format!("{} produced a non-finite prediction", self.spec.name)));
        }
        Ok(self.transform.inverse_next(raw, z_next))
    }

    /// One-step predictions of `series.values[i]` from the true history, for each `i` in `indices`.
    pub fn predict_in_sample(&self, series: &TimeSeries<T>, exogenous: &Exogenous<T>, indices: &[usize]) -> Result<Vec<T>, ForecastError> {
        let ctx = SeriesContext::for_series(series, exogenous);
        indices.iter().map(|&i| self.predict_next(&series.values[..i], &ctx)).collect()
    }
}

fn window_of<T: Scalar>(series: &TimeSeries<T>, rows: &[usize]) -> TrainingWindow {
    TrainingWindow {
        sensor_id: series.sensor_id.clone(),
        start: series.start,
        step_minutes: series.step_minutes,
        len: series.len(),
        rows: rows.len(),
        first_row: rows.iter().copied().min().unwrap_or(0),
        last_row: rows.iter().copied().max().unwrap_or(0),
    }
}

pub(crate) fn window_for<T: Scalar>(series: &TimeSeries<T>, rows: &[usize]) -> TrainingWindow {
    window_of(series, rows)
}

/// History plus how far to roll a model forward.
#[derive(Debug, Clone)]
pub struct ForecastRequest<T> {
    pub history: TimeSeries<T>,
    pub horizon_steps: usize,
    pub exogenous: Exogenous<T>,
}

impl<T: Scalar> ForecastRequest<T> {
    pub fn new(history: TimeSeries<T>, horizon_steps: usize) -> Self {
        ForecastRequest { history, horizon_steps, exogenous: Exogenous::new() }
    }
}

/// Feeds each one-step prediction back as history `horizon_steps` times.
pub fn recursive_forecast<T: Scalar>(model: &FittedModel<T>, request: &ForecastRequest<T>) -> Result<TimeSeries<T>, ForecastError> {
    let history = &request.history;
    let out = |values| TimeSeries::new(history.sensor_id.clone(), history.end(), history.step_minutes, values).with_unit(history.unit);
    if request.horizon_steps == 0 {
        return Ok(out(Vec::new()));
    }
    if let Some(i) = history.values.iter().position(|v| !v.is_finite()) {
        return Err(ForecastError::InvalidInput(format!("non-finite history value at index {i}")));
    }
    let ctx = SeriesContext::for_series(history, &request.exogenous);
    let mut raw = history.values.clone();
    raw.reserve(request.horizon_steps);
    for _ in 0..request.horizon_steps {
        let next = model.predict_next(&raw, &ctx)?;
        raw.push(next);
    }
    Ok(out(raw.split_off(history.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::std_pop;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn series(values: Vec<f64>) -> TimeSeries<f64> {
        TimeSeries::new("s", Timestamp::from_ymd_hm(2022, 1, 1, 0, 0).unwrap(), 5, values)
    }

    fn ar1(phi: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = phi * x[t - 1] + noise.sample(&mut rng);
        }
        x
    }

    #[test]
    fn hyperparameters_are_validated() {
        assert!(BaseModelSpec::<f64>::arima(9, 0, 0).is_err());
        assert!(BaseModelSpec::<f64>::arima(1, 3, 0).is_err());
        let hp = BTreeMap::from([("lags".to_string(), 3.0)]);
        assert!(matches!(
            BaseModelSpec::<f64>::new(ModelKind::Gbm, hp, TransformKind::None),
            Err(ForecastError::UnknownHyperparameter { .. })
        ));
        assert!(BaseModelSpec::<f64>::random_walk().with_transform(TransformKind::Standardize).is_err());
        assert!(BaseModelSpec::<f64>::arima(1, 0, 0).unwrap().with_exogenous(vec!["x".into()]).is_err());
        let spec = BaseModelSpec::<f64>::new(ModelKind::ProphetLite, BTreeMap::new(), TransformKind::None).unwrap();
        assert_eq!(spec.prophet_params(), ProphetParams::default());
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let s = series(ar1(0.8, 0.01, 3000, 5));
        let m = FittedModel::fit(&BaseModelSpec::arima(1, 0, 0).unwrap(), &s, &Exogenous::new()).unwrap();
        let (_, ar, _, _) = m.arima_coefficients().unwrap();
        assert!((ar[0] - 0.8).abs() < 0.05, "{ar:?}");
    }

    #[test]
    fn integrated_model_continues_a_ramp() {
        let s = series((0..200).map(|i| 2.0 + 0.5 * i as f64).collect());
        let m = FittedModel::fit(&BaseModelSpec::arima(0, 1, 0).unwrap(), &s, &Exogenous::new()).unwrap();
        let f = recursive_forecast(&m, &ForecastRequest::new(s.clone(), 10)).unwrap();
        for (h, v) in f.values.iter().enumerate() {
            assert!((v - (2.0 + 0.5 * (200 + h) as f64)).abs() < 1e-9);
        }
        assert_eq!(f.start, s.end());
    }

    #[test]
    fn white_noise_model_forecasts_the_mean() {
        let values: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let mean = values.iter().sum::<f64>() / 100.0;
        let s = series(values);
        let m = FittedModel::fit(&BaseModelSpec::arima(0, 0, 0).unwrap(), &s, &Exogenous::new()).unwrap();
        let f = recursive_forecast(&m, &ForecastRequest::new(s, 5)).unwrap();
        assert!(f.values.iter().all(|v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn ar_half_decays_geometrically() {
        let m = FittedModel::arima_from_parts(0.0, vec![0.5], vec![], 0).unwrap();
        let f = recursive_forecast(&m, &ForecastRequest::new(series(vec![3.0, 1.0]), 4)).unwrap();
        assert_eq!(f.values, vec![0.5, 0.25, 0.125, 0.0625]);
    }

    #[test]
    fn random_walk_is_flat_and_zero_horizon_is_empty() {
        let s = series(vec![1.0, 4.0, 2.5]);
        let m = FittedModel::fit(&BaseModelSpec::random_walk(), &s, &Exogenous::new()).unwrap();
        assert_eq!(recursive_forecast(&m, &ForecastRequest::new(s.clone(), 3)).unwrap().values, vec![2.5; 3]);
        assert!(recursive_forecast(&m, &ForecastRequest::new(s, 0)).unwrap().is_empty());
    }

    fn daily(days: usize, f: impl Fn(usize) -> f64) -> TimeSeries<f64> {
        series((0..days * 288).map(f).collect())
    }

    #[test]
    fn prophet_reconstructs_daily_sinusoid() {
        let amp = 3.0;
        let s = daily(4, |i| 20.0 + amp * (std::f64::consts::TAU * i as f64 / 288.0).sin());
        let p = ProphetParams { n_changepoints: 0, fourier_daily: 1, ridge_lambda: 1e-6 };
        let m = FittedModel::fit(&BaseModelSpec::prophet(&p).unwrap(), &s, &Exogenous::new()).unwrap();
        let idx: Vec<usize> = (1..s.len()).collect();
        let pred = m.predict_in_sample(&s, &Exogenous::new(), &idx).unwrap();
        let truth: Vec<f64> = idx.iter().map(|&i| s.values[i]).collect();
        assert!(super::super::rmse(&pred, &truth).unwrap() <= 0.01 * amp);
    }

    #[test]
    fn prophet_constant_has_no_seasonality() {
        let s = daily(3, |_| 7.0);
        let m = FittedModel::fit(&BaseModelSpec::prophet(&ProphetParams::default()).unwrap(), &s, &Exogenous::new()).unwrap();
        for i in (0..s.len()).step_by(17) {
            let c = m.prophet_components(s.time_at(i), &[]).unwrap();
            assert!(c.seasonal.abs() <= 1e-6);
            assert!((c.trend - 7.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn prophet_separates_trend_from_season() {
        let slope_per_day = 0.4;
        let s = daily(6, |i| 10.0 + slope_per_day * i as f64 / 288.0 + 2.0 * (std::f64::consts::TAU * i as f64 / 288.0).cos());
        let p = ProphetParams { n_changepoints: 3, fourier_daily: 2, ridge_lambda: 1e-3 };
        let m = FittedModel::fit(&BaseModelSpec::prophet(&p).unwrap(), &s, &Exogenous::new()).unwrap();
        let (a, b) = (1, s.len() - 1);
        let ta = m.prophet_components(s.time_at(a), &[]).unwrap().trend;
        let tb = m.prophet_components(s.time_at(b), &[]).unwrap().trend;
        let est = (tb - ta) / ((b - a) as f64 / 288.0);
        assert!((est - slope_per_day).abs() <= 0.05 * slope_per_day, "{est}");
    }

    #[test]
    fn prophet_needs_two_days() {
        let s = daily(1, |i| i as f64);
        let err = FittedModel::fit(&BaseModelSpec::prophet(&ProphetParams::default()).unwrap(), &s, &Exogenous::new());
        assert!(matches!(err, Err(ForecastError::InvalidInput(_))));
    }

    #[test]
    fn prophet_uses_exogenous_columns() {
        let exo = daily(3, |i| ((i / 40) % 2) as f64);
        let s = daily(3, |i| 5.0 + 3.0 * exo.values[i]);
        let exog = Exogenous::from([("door".to_string(), exo)]);
        let spec = BaseModelSpec::prophet(&ProphetParams::default()).unwrap().with_exogenous(vec!["door".into()]).unwrap();
        let m = FittedModel::fit(&spec, &s, &exog).unwrap();
        let idx: Vec<usize> = (1..s.len()).collect();
        let pred = m.predict_in_sample(&s, &exog, &idx).unwrap();
        let truth: Vec<f64> = idx.iter().map(|&i| s.values[i]).collect();
        assert!(super::super::rmse(&pred, &truth).unwrap() < 0.05);
        assert!(matches!(m.predict_in_sample(&s, &Exogenous::new(), &[5]), Err(ForecastError::MissingExogenous(_))));
    }

    #[test]
    fn gbm_with_differencing_tracks_a_daily_cycle() {
        let s = daily(8, |i| 20.0 + 2.0 * (std::f64::consts::TAU * i as f64 / 288.0).sin());
        let spec = BaseModelSpec::gbm(&GbmParams { n_trees: 50, ..Default::default() })
            .unwrap()
            .with_transform(TransformKind::DifferenceOrder1)
            .unwrap();
        let m = FittedModel::fit(&spec, &s.slice(0..7 * 288), &Exogenous::new()).unwrap();
        let f = recursive_forecast(&m, &ForecastRequest::new(s.slice(0..7 * 288), 288)).unwrap();
        let truth = &s.values[7 * 288..];
        assert!(super::super::rmse(&f.values, truth).unwrap() < 0.25 * std_pop(truth));
    }

    #[test]
    fn forecast_composes_over_horizons() {
        let s = series(ar1(0.7, 1.0, 600, 9));
        for spec in [
            BaseModelSpec::arima(2, 0, 1).unwrap(),
            BaseModelSpec::arima(1, 1, 0).unwrap().with_transform(TransformKind::Standardize).unwrap(),
        ] {
            let m = FittedModel::fit(&spec, &s, &Exogenous::new()).unwrap();
            let whole = recursive_forecast(&m, &ForecastRequest::new(s.clone(), 30)).unwrap();
            let first = recursive_forecast(&m, &ForecastRequest::new(s.clone(), 12)).unwrap();
            let rest = recursive_forecast(&m, &ForecastRequest::new(s.extended(&first.values), 18)).unwrap();
            let joined: Vec<f64> = first.values.iter().chain(&rest.values).copied().collect();
            for (a, b) in whole.values.iter().zip(&joined) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn history_shorter_than_lookback_is_rejected() {
        let s = series(ar1(0.5, 1.0, 400, 2));
        let m = FittedModel::fit(&BaseModelSpec::arima(3, 1, 0).unwrap(), &s, &Exogenous::new()).unwrap();
        let err = recursive_forecast(&m, &ForecastRequest::new(s.slice(0..2), 3));
        assert!(matches!(err, Err(ForecastError::HistoryTooShort { needed: 4, actual: 2 })));
    }

    #[test]
    fn f32_models_work() {
        let s = TimeSeries::new("s", Timestamp::from_minutes(0), 5, ar1(0.6, 1.0, 500, 4).into_iter().map(|v| v as f32).collect());
        let m = FittedModel::fit(&BaseModelSpec::<f32>::arima(1, 0, 0).unwrap(), &s, &Exogenous::new()).unwrap();
        assert!((m.arima_coefficients().unwrap().1[0] - 0.6).abs() < 0.1);
    }
}
