//! `/v1` HTTP API over immutable store snapshots.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::sync::Semaphore;
use twin_core::forecasting::{ModelKind, FIREPLACE_SENSOR};
use twin_core::BehaviorMatrix64;
use twin_ingest::{EventStore, StoreSnapshot};

use crate::capability::CapabilityReport;
use crate::config::TwinConfig;
use crate::ops::{self, Envelope, OpsError, RecommendRequest, SnapshotInfo};

/// Concurrent model trainings across all requests.
pub const TRAINING_PERMITS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum CacheKey {
    Forecast { sensor: String, horizon: usize, version: u64, models: Vec<ModelKind> },
    PredictMulti { horizon: usize, version: u64 },
}

impl CacheKey {
    fn version(&self) -> u64 {
        match self {
            CacheKey::Forecast { version, .. } | CacheKey::PredictMulti { version, .. } => *version,
        }
    }
}

pub struct AppState {
    pub config: Arc<TwinConfig>,
    pub store: Arc<EventStore>,
    pub matrix: Option<Arc<BehaviorMatrix64>>,
    pub capability: CapabilityReport,
    /// False until startup sources have been loaded.
    pub ready: Arc<AtomicBool>,
    training: Arc<Semaphore>,
    cache: Mutex<HashMap<CacheKey, Bytes>>,
}

impl AppState {
    pub fn new(config: TwinConfig, store: Arc<EventStore>, matrix: Option<BehaviorMatrix64>) -> Self {
        AppState {
            capability: CapabilityReport::from_config(&config),
            config: Arc::new(config),
            store,
            matrix: matrix.map(Arc::new),
            ready: Arc::new(AtomicBool::new(false)),
            training: Arc::new(Semaphore::new(TRAINING_PERMITS)),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn mark_ready(&self) {
        self.ready.store(true, Ordering::SeqCst);
    }

    fn snapshot(&self) -> Result<StoreSnapshot, ApiError> {
        if !self.ready.load(Ordering::SeqCst) {
            return Err(ApiError(OpsError::Unavailable("the store is warming up".into())));
        }
        Ok(self.store.snapshot())
    }

    fn cached(&self, key: &CacheKey) -> Option<Bytes> {
        self.cache.lock().expect("cache lock poisoned").get(key).cloned()
    }

    /// Entries for older store versions can never be hit again.
    fn remember(&self, key: CacheKey, body: Bytes) {
        let mut cache = self.cache.lock().expect("cache lock poisoned");
        let v = key.version();
        cache.retain(|k, _| k.version() >= v);
        cache.insert(key, body);
    }
}

type Shared = Arc<AppState>;

pub struct ApiError(pub OpsError);

impl From<OpsError> for ApiError {
    fn from(e: OpsError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            OpsError::NotFound(_) => StatusCode::NOT_FOUND,
            OpsError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            OpsError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        };
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn body<T: Serialize>(snapshot: SnapshotInfo, data: T) -> Bytes {
    Bytes::from(serde_json::to_vec(&Envelope { snapshot, data }).expect("response serializes"))
}

fn json(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn ok<T: Serialize>(snapshot: SnapshotInfo, data: T) -> ApiResult {
    Ok(json(body(snapshot, data)))
}

type Params = Query<BTreeMap<String, String>>;

fn param<'a>(q: &'a Params, name: &str) -> Result<&'a str, ApiError> {
    q.get(name).map(String::as_str).ok_or_else(|| ApiError(OpsError::Invalid(format!("missing query parameter `{name}`"))))
}

fn time_param(q: &Params, name: &str) -> Result<Option<twin_core::Timestamp>, ApiError> {
    q.get(name).map(|v| ops::parse_time(name, v)).transpose().map_err(ApiError)
}

fn number_param<N: std::str::FromStr>(q: &Params, name: &str) -> Result<N, ApiError> {
    param(q, name)?.parse().map_err(|_| ApiError(OpsError::Invalid(format!("`{name}` must be a number"))))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/capability", get(capability))
        .route("/v1/sensors", get(sensors))
        .route("/v1/sensors/{id}/series", get(series))
        .route("/v1/heatmap", get(heatmap))
        .route("/v1/occupancy", get(occupancy))
        .route("/v1/sun", get(sun))
        .route("/v1/sunhours", get(sun_hours))
        .route("/v1/forecast", get(forecast))
        .route("/v1/predict-multi", get(predict_multi))
        .route("/v1/recommend", post(recommend))
        .route("/v1/ingest", post(ingest))
        .with_state(state)
}

/// Available during warm-up so callers can see what the twin will offer.
async fn capability(State(s): State<Shared>) -> ApiResult {
    ok(SnapshotInfo::of(&s.store.snapshot()), &s.capability)
}

async fn sensors(State(s): State<Shared>) -> ApiResult {
    let snap = s.snapshot()?;
    ok(SnapshotInfo::of(&snap), ops::sensors(&s.config.house, &snap))
}

async fn series(State(s): State<Shared>, Path(id): Path<String>, q: Params) -> ApiResult {
    let snap = s.snapshot()?;
    ok(SnapshotInfo::of(&snap), ops::series(&snap, &id, time_param(&q, "from")?, time_param(&q, "to")?)?)
}

async fn heatmap(State(s): State<Shared>, q: Params) -> ApiResult {
    let snap = s.snapshot()?;
    ok(SnapshotInfo::of(&snap), ops::heatmap(&s.config, &snap, param(&q, "room")?, time_param(&q, "at")?)?)
}

async fn occupancy(State(s): State<Shared>, q: Params) -> ApiResult {
    let snap = s.snapshot()?;
    ok(SnapshotInfo::of(&snap), ops::occupancy(&s.config, &snap, param(&q, "room")?, time_param(&q, "from")?, time_param(&q, "to")?)?)
}

async fn sun(State(s): State<Shared>, q: Params) -> ApiResult {
    let data = ops::sun(&s.config.house, param(&q, "date")?, param(&q, "time")?)?;
    ok(SnapshotInfo::of(&s.store.snapshot()), data)
}

async fn sun_hours(State(s): State<Shared>, q: Params) -> ApiResult {
    let data = ops::sun_hours(&s.config.house, number_param(&q, "year")?, None)?;
    ok(SnapshotInfo::of(&s.store.snapshot()), data)
}

/// Runs a training job on the blocking pool under the shared permit and the
/// configured timeout, caching the serialized body per store version.
async fn train<T, F>(s: Shared, key: CacheKey, snap: StoreSnapshot, job: F) -> ApiResult
where
    T: Serialize + Send + 'static,
    F: FnOnce(&TwinConfig, &StoreSnapshot) -> Result<T, OpsError> + Send + 'static,
{
    if let Some(hit) = s.cached(&key) {
        return Ok(json(hit));
    }
    let timeout = Duration::from_secs(s.config.forecasting.timeout_s);
    let unavailable = |m: &str| ApiError(OpsError::Unavailable(m.to_string()));
    let run = async {
        let _permit = s.training.clone().acquire_owned().await.map_err(|_| unavailable("training pool closed"))?;
        // Another request may have finished the same job while this one queued.
        if let Some(hit) = s.cached(&key) {
            return Ok(hit);
        }
        let config = s.config.clone();
        let info = SnapshotInfo::of(&snap);
        let bytes = tokio::task::spawn_blocking(move || job(&config, &snap).map(|data| body(info, data)))
            .await
            .map_err(|_| unavailable("training task failed"))??;
        s.remember(key.clone(), bytes.clone());
        Ok(bytes)
    };
    match tokio::time::timeout(timeout, run).await {
        Ok(r) => r.map(json),
        Err(_) => Err(unavailable("model training timed out")),
    }
}

async fn forecast(State(s): State<Shared>, q: Params) -> ApiResult {
    let snap = s.snapshot()?;
    let sensor = param(&q, "sensor")?.to_string();
    let horizon: usize = number_param(&q, "horizon")?;
    ops::check_horizon(&s.config, horizon)?;
    let models = ops::parse_models(q.get("models").map(String::as_str), &s.config.forecasting.models)?;
    snap.points(&sensor).map_err(|e| ApiError(e.into()))?;
    let key = CacheKey::Forecast { sensor: sensor.clone(), horizon, version: snap.version(), models: models.clone() };
    train(s.clone(), key, snap, move |c, snap| ops::forecast(c, snap, &sensor, horizon, &models)).await
}

async fn predict_multi(State(s): State<Shared>, q: Params) -> ApiResult {
    let snap = s.snapshot()?;
    let horizon: usize = number_param(&q, "horizon")?;
    ops::check_horizon(&s.config, horizon)?;
    snap.points(FIREPLACE_SENSOR).map_err(|e| ApiError(e.into()))?;
    let key = CacheKey::PredictMulti { horizon, version: snap.version() };
    train(s.clone(), key, snap, move |c, snap| ops::predict_multi(c, snap, horizon)).await
}

async fn recommend(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let request: RecommendRequest = serde_json::from_slice(&body).map_err(|e| ApiError(OpsError::Invalid(format!("body: {e}"))))?;
    let result = ops::recommend_for(&s.config, s.matrix.as_deref(), &request)?;
    ok(SnapshotInfo::of(&s.store.snapshot()), result)
}

#[derive(Serialize)]
struct Ingested {
    accepted: usize,
}

async fn ingest(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult {
    s.snapshot()?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError(OpsError::Invalid("body is not UTF-8".into())))?;
    let is_json = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).is_some_and(|v| v.contains("json"));
    let batch = ops::parse_batch(text, is_json)?;
    let store = s.store.clone();
    let n = batch.len();
    tokio::task::spawn_blocking(move || store.append(&batch))
        .await
        .map_err(|_| ApiError(OpsError::Unavailable("ingest task failed".into())))?
        .map_err(|e| ApiError(e.into()))?;
    ok(SnapshotInfo::of(&s.store.snapshot()), Ingested { accepted: n })
}
