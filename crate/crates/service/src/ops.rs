//! Operations shared by the HTTP handlers and the CLI. Each takes an immutable
//! store snapshot, so a result depends only on its arguments and the snapshot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use twin_core::diagnostics::{co2_band, detect_occupancy, render_heatmap, Bounds, DoorEvent, HeatMapDocument, HeatSensor, OccupancyEvent};
use twin_core::forecasting::pipeline::{forecast_bundle, PipelineConfig};
use twin_core::forecasting::{predict_multi_output, Exogenous, ForecastError, ModelKind, MultiOutputModel, MultiOutputRequest, FIREPLACE_SENSOR, SECOND_FLOOR_TARGETS};
use twin_core::house::SensorKind;
use twin_core::recommender::{recommend, RecommenderError, STEPS_PER_DAY};
use twin_core::series::{read_csv, resample, GapPolicy, RawSeries, Unit};
use twin_core::solar::{monthly_sun_hours, sun_at, HorizonMask, SunHours};
use twin_core::{BehaviorMatrix64, HouseModel64, RecommendationResult64, TimeSeries64, Timestamp};
use twin_ingest::{IngestError, Observation, StoreSnapshot};

use crate::config::TwinConfig;

/// Step of every resampled series handed to the models.
pub const STEP_MINUTES: u32 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpsError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
}

impl From<IngestError> for OpsError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::NotFound(what) => OpsError::NotFound(what),
            other => OpsError::Invalid(other.to_string()),
        }
    }
}

impl From<ForecastError> for OpsError {
    fn from(e: ForecastError) -> Self {
        OpsError::Invalid(e.to_string())
    }
}

impl From<RecommenderError> for OpsError {
    fn from(e: RecommenderError) -> Self {
        match e {
            RecommenderError::UnknownUser(u) => OpsError::NotFound(format!("user `{u}`")),
            other => OpsError::Invalid(other.to_string()),
        }
    }
}

fn invalid(message: impl Into<String>) -> OpsError {
    OpsError::Invalid(message.into())
}

/// Identifies the store state a response was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotInfo {
    pub version: u64,
    /// Newest observation time in the store.
    pub latest: Option<Timestamp>,
}

impl SnapshotInfo {
    pub fn of(snapshot: &StoreSnapshot) -> Self {
        SnapshotInfo { version: snapshot.version(), latest: snapshot.latest() }
    }
}

/// Every response body: the snapshot plus the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub snapshot: SnapshotInfo,
    pub data: T,
}

pub fn parse_time(name: &str, value: &str) -> Result<Timestamp, OpsError> {
    value.parse().map_err(|e| invalid(format!("{name}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SunData {
    pub date: String,
    pub time: String,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude_deg: f64,
    pub azimuth_deg: f64,
}

/// Sun position at `date` (`YYYY-MM-DD`) and UT `time` (`HH:MM`) over the house.
pub fn sun(house: &HouseModel64, date: &str, time: &str) -> Result<SunData, OpsError> {
    let t = parse_time("date/time", &format!("{date}T{time}:00Z"))?;
    let r = sun_at(t, house.latitude, house.longitude).map_err(|e| invalid(e.to_string()))?;
    Ok(SunData {
        date: date.to_string(),
        time: time.to_string(),
        latitude: house.latitude,
        longitude: house.longitude,
        altitude_deg: r.altitude_deg,
        azimuth_deg: r.azimuth_deg,
    })
}

/// Daylight on the last day of each month.
pub fn sun_hours(house: &HouseModel64, year: i32, mask: Option<&HorizonMask<f64>>) -> Result<Vec<SunHours>, OpsError> {
    monthly_sun_hours(year, house, mask).map_err(|e| invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorInfo {
    pub id: String,
    pub kind: Option<SensorKind>,
    pub room: Option<String>,
    pub points: usize,
    pub first: Option<Timestamp>,
    pub last: Option<Timestamp>,
}

/// Stored sensors in id order, annotated from the house model where known.
pub fn sensors(house: &HouseModel64, snapshot: &StoreSnapshot) -> Vec<SensorInfo> {
    snapshot
        .sensor_ids()
        .map(|id| {
            let pts = snapshot.points(id).unwrap_or(&[]);
            let desc = house.sensor(id);
            SensorInfo {
                id: id.to_string(),
                kind: desc.map(|d| d.kind),
                room: desc.map(|d| d.room.clone()),
                points: pts.len(),
                first: pts.first().map(|p| p.0),
                last: pts.last().map(|p| p.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub timestamp: Timestamp,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesData {
    pub sensor: String,
    pub points: Vec<Point>,
}

/// Raw observations in `[from, to]`; open ends default to the sensor's full range.
pub fn series(snapshot: &StoreSnapshot, sensor: &str, from: Option<Timestamp>, to: Option<Timestamp>) -> Result<SeriesData, OpsError> {
    let all = snapshot.points(sensor)?;
    let from = from.or(all.first().map(|p| p.0)).unwrap_or_default();
    let to = to.or(all.last().map(|p| p.0)).unwrap_or_default();
    let pts = snapshot.query(sensor, from, to)?;
    Ok(SeriesData { sensor: sensor.to_string(), points: pts.iter().map(|&(timestamp, value)| Point { timestamp, value }).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub sensor: String,
    pub timestamp: Timestamp,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Co2Overlay {
    pub sensor: String,
    pub timestamp: Timestamp,
    pub ppm: f64,
    pub band: u8,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapData {
    pub at: Timestamp,
    pub readings: Vec<Reading>,
    pub document: HeatMapDocument,
    pub co2: Option<Co2Overlay>,
}

/// Heat map of `room` from each temperature sensor's latest reading at or before `at`
/// (default: the newest observation), plus the room's CO2 fog level.
pub fn heatmap(config: &TwinConfig, snapshot: &StoreSnapshot, room: &str, at: Option<Timestamp>) -> Result<HeatmapData, OpsError> {
    let house = &config.house;
    let r = house.room(room).ok_or_else(|| OpsError::NotFound(format!("room `{room}`")))?;
    let at = at.or(snapshot.latest()).ok_or_else(|| invalid("the store is empty"))?;
    let latest = |id: &str| snapshot.value_at(id, at).ok().flatten();
    let mut readings = Vec::new();
    let mut sensors = Vec::new();
    for s in house.sensors_in(room, SensorKind::Temperature) {
        if let Some((timestamp, value)) = latest(&s.id) {
            readings.push(Reading { sensor: s.id.clone(), timestamp, value });
            sensors.push(HeatSensor { position: [s.position[0], s.position[1]], temperature: value });
        }
    }
    if sensors.is_empty() {
        return Err(invalid(format!("no temperature readings in `{room}` at or before {at}")));
    }
    let (x0, y0, x1, y1) = r.bounds();
    let frame = render_heatmap(room, Bounds { min: [x0, y0], max: [x1, y1] }, &sensors, &config.diagnostics.heatmap).map_err(|e| invalid(e.to_string()))?;
    let co2 = house.sensors_in(room, SensorKind::Co2).find_map(|s| {
        let (timestamp, ppm) = latest(&s.id)?;
        let (band, opacity) = co2_band(ppm).ok()?;
        Some(Co2Overlay { sensor: s.id.clone(), timestamp, ppm, band, opacity })
    });
    Ok(HeatmapData { at, readings, document: frame.document(), co2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyData {
    pub room: String,
    pub temperature_sensor: String,
    pub door_sensor: String,
    pub events: Vec<OccupancyEvent<f64>>,
}

/// Door-then-warming episodes in `room` between `from` and `to`.
pub fn occupancy(config: &TwinConfig, snapshot: &StoreSnapshot, room: &str, from: Option<Timestamp>, to: Option<Timestamp>) -> Result<OccupancyData, OpsError> {
    let house = &config.house;
    house.room(room).ok_or_else(|| OpsError::NotFound(format!("room `{room}`")))?;
    let stored = |kind| house.sensors_in(room, kind).find(|s| snapshot.contains(&s.id)).map(|s| s.id.clone());
    let temp_id = stored(SensorKind::Temperature).ok_or_else(|| invalid(format!("no stored temperature sensor in `{room}`")))?;
    let door_id = stored(SensorKind::Proximity).ok_or_else(|| invalid(format!("no stored door sensor in `{room}`")))?;
    let window = series(snapshot, &temp_id, from, to)?;
    let raw = RawSeries::new(&temp_id, Unit::Celsius, window.points.iter().map(|p| (p.timestamp, p.value)).collect());
    let temps = resample(&raw, STEP_MINUTES, GapPolicy::default()).map_err(|e| invalid(e.to_string()))?;
    let doors: Vec<DoorEvent> = series(snapshot, &door_id, from, to)?.points.iter().map(|p| DoorEvent { timestamp: p.timestamp, open: p.value >= 0.5 }).collect();
    let events = detect_occupancy(room, &temps, &doors, &config.diagnostics.occupancy);
    Ok(OccupancyData { room: room.to_string(), temperature_sensor: temp_id, door_sensor: door_id, events })
}

/// The last `days` whole days of `sensor` on the 5-minute grid.
pub fn history(snapshot: &StoreSnapshot, sensor: &str, days: usize) -> Result<TimeSeries64, OpsError> {
    let raw = snapshot.raw_series(sensor, Unit::Celsius)?;
    let full = resample(&raw, STEP_MINUTES, GapPolicy::default()).map_err(|e| invalid(e.to_string()))?;
    let keep = days * full.steps_per_day();
    Ok(if full.len() > keep { full.slice(full.len() - keep..full.len()) } else { full })
}

/// Parses a comma-separated family list; empty means the configured default.
pub fn parse_models(list: Option<&str>, default: &[ModelKind]) -> Result<Vec<ModelKind>, OpsError> {
    let Some(list) = list.filter(|l| !l.trim().is_empty()) else { return Ok(default.to_vec()) };
    let mut kinds: Vec<ModelKind> = list.split(',').map(|s| s.trim().parse::<ModelKind>()).collect::<Result<_, _>>()?;
    kinds.sort_by_key(|k| k.name());
    kinds.dedup();
    Ok(kinds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastData {
    pub sensor: String,
    pub horizon: usize,
    pub step_minutes: u32,
    pub models: Vec<ModelKind>,
    /// Ensemble forecast, one row per step after the last stored observation.
    pub rows: Vec<Point>,
    pub members: BTreeMap<String, Vec<f64>>,
    pub weights: BTreeMap<String, f64>,
}

pub fn check_horizon(config: &TwinConfig, horizon: usize) -> Result<(), OpsError> {
    let max = config.forecasting.max_horizon;
    if horizon == 0 || horizon > max {
        return Err(invalid(format!("horizon must lie in 1..={max}")));
    }
    Ok(())
}

/// Weight-averaged forecast of `sensor` from its recent history.
pub fn forecast(config: &TwinConfig, snapshot: &StoreSnapshot, sensor: &str, horizon: usize, models: &[ModelKind]) -> Result<ForecastData, OpsError> {
    check_horizon(config, horizon)?;
    let f = &config.forecasting;
    let hist = history(snapshot, sensor, f.history_days)?;
    let pipeline = PipelineConfig { val_days: f.validation_days, ..f.pipeline.clone() };
    let bundle = forecast_bundle(&hist, &Exogenous::new(), models, horizon, &pipeline)?;
    Ok(ForecastData {
        sensor: sensor.to_string(),
        horizon,
        step_minutes: hist.step_minutes,
        models: models.to_vec(),
        rows: bundle.ensemble.points().map(|(timestamp, value)| Point { timestamp, value }).collect(),
        members: bundle.members.into_iter().map(|(k, s)| (k, s.values)).collect(),
        weights: bundle.weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictMultiData {
    pub horizon: usize,
    pub start: Timestamp,
    pub step_minutes: u32,
    /// Forecast fireplace path driving the targets.
    pub fireplace: Vec<f64>,
    pub targets: BTreeMap<String, Vec<f64>>,
}

/// Forecasts the fireplace, then derives the second-floor targets from that path
/// with a model fitted on the stored history.
pub fn predict_multi(config: &TwinConfig, snapshot: &StoreSnapshot, horizon: usize) -> Result<PredictMultiData, OpsError> {
    let f = &config.forecasting;
    let fire = forecast(config, snapshot, FIREPLACE_SENSOR, horizon, &f.models)?;
    let hist = history(snapshot, FIREPLACE_SENSOR, f.history_days)?;
    let targets: BTreeMap<String, TimeSeries64> = SECOND_FLOOR_TARGETS
        .iter()
        .filter(|t| snapshot.contains(t))
        .map(|t| Ok((t.to_string(), history(snapshot, t, f.history_days)?)))
        .collect::<Result<_, OpsError>>()?;
    if targets.is_empty() {
        return Err(invalid("no second-floor target is stored"));
    }
    let model = MultiOutputModel::fit(&hist, &targets, f.multi_output)?;
    // Lagged features of the first forecast steps reach back into the history.
    let lags = f.multi_output.lags.min(hist.len());
    let path: Vec<f64> = fire.rows.iter().map(|p| p.value).collect();
    let driver = hist.slice(hist.len() - lags..hist.len()).extended(&path);
    let request = MultiOutputRequest { fireplace: driver, targets: targets.keys().cloned().collect() };
    let predicted = predict_multi_output(&request, &model)?;
    Ok(PredictMultiData {
        horizon,
        start: fire.rows[0].timestamp,
        step_minutes: fire.step_minutes,
        fireplace: path,
        targets: predicted.into_iter().map(|(k, s)| (k, s.values[lags..].to_vec())).collect(),
    })
}

/// A hypothetical day to recommend for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    /// Outdoor temperature at each 5-minute step of the day.
    pub outdoor_temps: Vec<f64>,
    #[serde(default)]
    pub user: Option<String>,
}

pub fn recommend_for(config: &TwinConfig, matrix: Option<&BehaviorMatrix64>, request: &RecommendRequest) -> Result<RecommendationResult64, OpsError> {
    let matrix = matrix.ok_or_else(|| invalid("no behavior matrix is configured"))?;
    if request.outdoor_temps.len() != STEPS_PER_DAY {
        return Err(invalid(format!("outdoor_temps needs {STEPS_PER_DAY} values, got {}", request.outdoor_temps.len())));
    }
    let user = request.user.as_deref().unwrap_or(&config.recommender.user);
    Ok(recommend(&request.outdoor_temps, matrix, user, &config.recommender.params())?)
}

/// Parses a 288-value scenario: numbers separated by commas, whitespace or newlines.
pub fn parse_scenario(text: &str) -> Result<Vec<f64>, OpsError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| invalid(format!("`{s}` is not a number"))))
        .collect()
}

/// An ingest body: exchange-format CSV or a JSON array of observations.
pub fn parse_batch(body: &str, is_json: bool) -> Result<Vec<Observation>, OpsError> {
    if is_json {
        return serde_json::from_str(body).map_err(|e| invalid(format!("observations: {e}")));
    }
    let rows = read_csv::<f64, _>(body.as_bytes()).map_err(|e| invalid(e.to_string()))?;
    Ok(rows.into_iter().filter_map(|r| r.value.map(|value| Observation { sensor_id: r.sensor_id, timestamp: r.timestamp, value })).collect())
}
