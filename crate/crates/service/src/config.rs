//! Twin configuration document (TOML). Unknown keys are rejected everywhere.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twin_core::diagnostics::{HeatMapConfig, OccupancyConfig};
use twin_core::forecasting::pipeline::PipelineConfig;
use twin_core::forecasting::{ModelKind, MultiOutputParams};
use twin_core::recommender::RecommenderConfig;
use twin_core::HouseModel64;
use twin_ingest::simulator::simulated_house;
use twin_ingest::{SourceConfig, SourcesFile};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    /// Families combined by default when a request names none.
    pub models: Vec<ModelKind>,
    /// Days of history, ending at the newest observation, used per request.
    pub history_days: usize,
    /// Trailing days of that history used to weight the families.
    pub validation_days: usize,
    pub max_horizon: usize,
    pub timeout_s: u64,
    /// Candidate grid and weighting exponent; its 70/10/10 split drives `forecast --benchmark`.
    pub pipeline: PipelineConfig,
    pub multi_output: MultiOutputParams,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        ForecastSettings {
            models: vec![ModelKind::Arima, ModelKind::ProphetLite, ModelKind::Gbm],
            history_days: 14,
            validation_days: 2,
            max_horizon: 2016,
            timeout_s: 120,
            pipeline: PipelineConfig::default(),
            multi_output: MultiOutputParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSettings {
    pub heatmap: HeatMapConfig<f64>,
    pub occupancy: OccupancyConfig<f64>,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        DiagnosticsSettings { heatmap: HeatMapConfig::default(), occupancy: OccupancyConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderSettings {
    pub rmse_threshold: f64,
    pub min_corr: f64,
    /// Behavior matrix CSV; without one the twin is not prescriptive.
    pub behavior_matrix: Option<PathBuf>,
    /// Household recommended for when a request names none.
    pub user: String,
}

impl Default for RecommenderSettings {
    fn default() -> Self {
        let d = RecommenderConfig::<f64>::default();
        RecommenderSettings { rmse_threshold: d.rmse_threshold, min_corr: d.min_corr, behavior_matrix: None, user: twin_core::recommender::OBSERVED_USER.into() }
    }
}

impl RecommenderSettings {
    pub fn params(&self) -> RecommenderConfig<f64> {
        RecommenderConfig { rmse_threshold: self.rmse_threshold, min_corr: self.min_corr }
    }
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwinConfig {
    #[serde(default = "simulated_house")]
    pub house: HouseModel64,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    /// Store directory; in-memory when absent.
    #[serde(default)]
    pub store_path: Option<PathBuf>,
    #[serde(default)]
    pub forecasting: ForecastSettings,
    #[serde(default)]
    pub diagnostics: DiagnosticsSettings,
    #[serde(default)]
    pub recommender: RecommenderSettings,
    #[serde(default = "default_listen")]
    pub listen: String,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            house: simulated_house(),
            sources: Vec::new(),
            store_path: None,
            forecasting: ForecastSettings::default(),
            diagnostics: DiagnosticsSettings::default(),
            recommender: RecommenderSettings::default(),
            listen: default_listen(),
        }
    }
}

impl TwinConfig {
    /// Parses and validates; syntax and schema errors name the line and column.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: TwinConfig = toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    /// Relative paths inside the document resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        let mut config = Self::parse(&text, &path.display().to_string())?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.store_path.as_mut().map(fix);
        self.recommender.behavior_matrix.as_mut().map(fix);
        for s in &mut self.sources {
            if let Some(p) = s.credentials.get_mut("path") {
                let mut pb = PathBuf::from(&*p);
                fix(&mut pb);
                *p = pb.display().to_string();
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.house.validate().map_err(|e| ConfigError::Invalid(format!("house: {e}")))?;
        // Reuses the sources document checks: per-kind credentials and unique ids.
        let text = toml::to_string(&SourcesFile { sources: self.sources.clone() }).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        SourcesFile::parse(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.listen.parse::<SocketAddr>().is_err() {
            return invalid(format!("listen address `{}` is not host:port", self.listen));
        }
        let f = &self.forecasting;
        if f.validation_days == 0 || f.history_days < f.validation_days + 3 {
            return invalid(format!("forecasting needs validation_days >= 1 and history_days >= validation_days + 3 = {}", f.validation_days + 3));
        }
        if f.max_horizon == 0 || f.timeout_s == 0 {
            return invalid("forecasting.max_horizon and timeout_s must be positive".into());
        }
        if f.pipeline.folds < 2 || !(f.pipeline.p >= 0.0 && f.pipeline.p.is_finite()) {
            return invalid("forecasting.pipeline needs folds >= 2 and a finite p >= 0".into());
        }
        let d = &self.diagnostics;
        if d.heatmap.resolution == 0 || !(d.heatmap.alpha > 0.0) || !(d.occupancy.rise_threshold_c > 0.0) || d.occupancy.window_minutes == 0 {
            return invalid("diagnostics settings must be positive".into());
        }
        let r = &self.recommender;
        if !(r.rmse_threshold > 0.0) || !(-1.0..=1.0).contains(&r.min_corr) {
            return invalid("recommender needs rmse_threshold > 0 and min_corr in [-1, 1]".into());
        }
        Ok(())
    }
}
