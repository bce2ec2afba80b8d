//! Provider payload mappings, one per polling kind, and the poll itself.
//!
//! The shapes are minimal fixtures modelled on the provider families, not
//! faithful copies of live APIs:
//!
//! * `poll-bearer` (bridge style): `{"<id>": {"state": {"temperature": 2150, "lastupdated": "2022-01-21T10:00:00"}}}`,
//!   temperature in hundredths of a degree, naive UTC time.
//! * `poll-oauth-password` (weather-station style): `{"body": {"devices": [{"_id": "<id>",
//!   "dashboard_data": {"time_utc": 1642759200, "Temperature": 21.5}}]}}`, Unix seconds.
//! * `poll-jwt-assertion` (wireless-sensor style): `{"devices": [{"name": "projects/<p>/devices/<id>",
//!   "reported": {"temperature": {"value": 21.5, "updateTime": "2022-01-21T10:00:00Z"}}}]}`.

use chrono::NaiveDateTime;
use serde_json::Value;
use twin_core::Timestamp;

use crate::config::{SourceConfig, SourceKind};
use crate::token::TokenState;
use crate::transport::{HttpRequest, Transport};
use crate::{IngestError, Observation};

/// Observations from one poll plus the number of records that could not be mapped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PollOutcome {
    pub observations: Vec<Observation>,
    pub skipped: usize,
}

pub trait PayloadAdapter {
    fn map(&self, payload: &Value) -> PollOutcome;
}

pub struct BridgeAdapter;
pub struct StationAdapter;
pub struct WirelessAdapter;

fn obs(id: &str, timestamp: Timestamp, value: f64) -> Option<Observation> {
    (!id.is_empty() && value.is_finite()).then(|| Observation { sensor_id: id.to_string(), timestamp, value })
}

fn collect<'a>(records: impl Iterator<Item = &'a Value>, map: impl Fn(&Value) -> Option<Observation>) -> PollOutcome {
    let mut out = PollOutcome::default();
    for r in records {
        match map(r) {
            Some(o) => out.observations.push(o),
            None => out.skipped += 1,
        }
    }
    out
}

impl PayloadAdapter for BridgeAdapter {
    fn map(&self, payload: &Value) -> PollOutcome {
        let Some(sensors) = payload.as_object() else { return PollOutcome::default() };
        let mut out = PollOutcome::default();
        for (id, rec) in sensors {
            let mapped = (|| {
                let state = rec.get("state")?;
                let hundredths = state.get("temperature")?.as_f64()?;
                let t = NaiveDateTime::parse_from_str(state.get("lastupdated")?.as_str()?, "%Y-%m-%dT%H:%M:%S").ok()?;
                obs(id, Timestamp::from_datetime(t.and_utc()), hundredths / 100.0)
            })();
            match mapped {
                Some(o) => out.observations.push(o),
                None => out.skipped += 1,
            }
        }
        out
    }
}

impl PayloadAdapter for StationAdapter {
    fn map(&self, payload: &Value) -> PollOutcome {
        let devices = payload.pointer("/body/devices").and_then(Value::as_array).map(|a| a.iter());
        collect(devices.into_iter().flatten(), |d| {
            let data = d.get("dashboard_data")?;
            let t = Timestamp::from_unix_seconds(data.get("time_utc")?.as_i64()?);
            obs(d.get("_id")?.as_str()?, t, data.get("Temperature")?.as_f64()?)
        })
    }
}

impl PayloadAdapter for WirelessAdapter {
    fn map(&self, payload: &Value) -> PollOutcome {
        let devices = payload.get("devices").and_then(Value::as_array).map(|a| a.iter());
        collect(devices.into_iter().flatten(), |d| {
            let id = d.get("name")?.as_str()?.rsplit('/').next()?;
            let temp = d.pointer("/reported/temperature")?;
            let t = Timestamp::parse_rfc3339(temp.get("updateTime")?.as_str()?).ok()?;
            obs(id, t, temp.get("value")?.as_f64()?)
        })
    }
}

pub fn adapter_for(kind: SourceKind) -> Option<&'static dyn PayloadAdapter> {
    match kind {
        SourceKind::PollBearer => Some(&BridgeAdapter),
        SourceKind::PollOauthPassword => Some(&StationAdapter),
        SourceKind::PollJwtAssertion => Some(&WirelessAdapter),
        SourceKind::Replay | SourceKind::Simulator => None,
    }
}

/// One authenticated GET of the source endpoint.
pub fn poll_once(config: &SourceConfig, token: &TokenState, transport: &dyn Transport) -> Result<PollOutcome, IngestError> {
    let adapter = adapter_for(config.kind)
        .ok_or_else(|| IngestError::Config { source_id: config.source_id.clone(), message: format!("{} sources are not polled", config.kind) })?;
    let mut req = HttpRequest::get(&config.endpoint).header("Authorization", format!("Bearer {}", token.access_token));
    if let Some(agent) = config.optional("user_agent") {
        req = req.header("User-Agent", agent);
    }
    let source_error = |retryable: bool, message: String| IngestError::Source { source_id: config.source_id.clone(), retryable, message };
    let resp = transport.send(&req).map_err(|e| source_error(true, e))?;
    match resp.status {
        401 => return Err(IngestError::Unauthorized { source_id: config.source_id.clone() }),
        s if !(200..300).contains(&s) => return Err(source_error(s >= 500 || s == 429, format!("endpoint answered {s}"))),
        _ => {}
    }
    if resp.body.trim().is_empty() {
        return Ok(PollOutcome::default());
    }
    let payload: Value = serde_json::from_str(&resp.body).map_err(|e| source_error(false, format!("payload is not JSON: {e}")))?;
    let outcome = adapter.map(&payload);
    if outcome.skipped > 0 {
        log::warn!("source {}: skipped {} malformed record(s)", config.source_id, outcome.skipped);
    }
    Ok(outcome)
}
