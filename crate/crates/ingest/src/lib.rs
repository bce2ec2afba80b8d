//! Sensor ingestion: source configuration, token handling, provider adapters,
//! the append-only observation store, file replay and the house simulator.

pub mod adapter;
pub mod config;
pub mod replay;
pub mod simulator;
pub mod store;
pub mod token;
pub mod transport;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use twin_core::Timestamp;

pub use adapter::{poll_once, PollOutcome};
pub use config::{SourceConfig, SourceKind, SourcesFile};
pub use store::{EventStore, StoreSnapshot};
pub use token::{TokenCache, TokenState};
pub use transport::{Transport, UreqTransport};

/// One reading in store schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub sensor_id: String,
    pub timestamp: Timestamp,
    pub value: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("config error in source `{source_id}`: {message}")]
    Config { source_id: String, message: String },
    #[error("config error in source `{source_id}`: missing credential `{field}`")]
    MissingCredential { source_id: String, field: String },
    #[error("source `{source_id}` failed ({}): {message}", if *.retryable { "retryable" } else { "permanent" })]
    Source { source_id: String, retryable: bool, message: String },
    #[error("source `{source_id}` rejected the access token")]
    Unauthorized { source_id: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid range: {from} is after {to}")]
    InvalidRange { from: Timestamp, to: Timestamp },
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("replay of {path}: {message}")]
    Replay { path: String, message: String },
    #[error("io: {0}")]
    Io(String),
}

pub fn unix_now() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64)
}

/// Loads a replay or simulator source into the store in one batch.
pub fn load_static_source(config: &SourceConfig, store: &EventStore) -> Result<usize, IngestError> {
    config.validate()?;
    let obs = match config.kind {
        SourceKind::Replay => replay::load(config.credential("path")?)?,
        SourceKind::Simulator => {
            simulator::simulate(&simulator::SimulatorConfig::from_credentials(&config.source_id, &config.credentials)?)?.observations
        }
        kind => return Err(IngestError::Config { source_id: config.source_id.clone(), message: format!("{kind} is a polling source") }),
    };
    store.append(&obs)?;
    Ok(obs.len())
}

/// A polling source with its token cache; the single writer for that source.
pub struct PollingSource {
    config: SourceConfig,
    transport: Arc<dyn Transport>,
    tokens: TokenCache,
}

impl PollingSource {
    pub fn new(config: SourceConfig, transport: Arc<dyn Transport>) -> Result<Self, IngestError> {
        config.validate()?;
        if !config.kind.is_polling() {
            return Err(IngestError::Config { source_id: config.source_id.clone(), message: format!("{} is not a polling source", config.kind) });
        }
        Ok(PollingSource { config, transport, tokens: TokenCache::default() })
    }

    pub fn with_tokens(mut self, tokens: TokenCache) -> Self {
        self.tokens = tokens;
        self
    }

    pub fn tokens(&self) -> &TokenCache {
        &self.tokens
    }

    /// One poll; a 401 invalidates the token and retries once with a fresh one.
    pub fn poll(&mut self, store: &EventStore, now_s: i64) -> Result<PollOutcome, IngestError> {
        let token = self.tokens.acquire(&self.config, self.transport.as_ref(), now_s)?;
        let outcome = match poll_once(&self.config, &token, self.transport.as_ref()) {
            Err(IngestError::Unauthorized { .. }) => {
                self.tokens.invalidate();
                let token = self.tokens.acquire(&self.config, self.transport.as_ref(), now_s)?;
                poll_once(&self.config, &token, self.transport.as_ref())?
            }
            other => other?,
        };
        store.append(&outcome.observations)?;
        Ok(outcome)
    }

    /// Polls on the configured cadence until `stop` is set; failures are logged and retried next cycle.
    pub fn run(mut self, store: &EventStore, stop: &AtomicBool) {
        while !stop.load(Ordering::Relaxed) {
            match self.poll(store, unix_now()) {
                Ok(o) => log::debug!("source {}: {} observation(s)", self.config.source_id, o.observations.len()),
                Err(e) => log::warn!("{e}"),
            }
            for _ in 0..self.config.poll_interval_s {
                if stop.load(Ordering::Relaxed) {
                    return;
                }
                std::thread::sleep(Duration::from_secs(1));
            }
        }
    }
}
