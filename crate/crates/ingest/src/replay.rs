//! Replays a recorded exchange-format CSV file.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use twin_core::series::read_csv;

use crate::store::EventStore;
use crate::{IngestError, Observation};

/// Replay pacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speed {
    /// Everything at once.
    Instant,
    /// Recorded time divided by this factor, e.g. 60 plays an hour per minute.
    Factor(f64),
}

impl FromStr for Speed {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "instant" {
            return Ok(Speed::Instant);
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f.is_finite() => Ok(Speed::Factor(f)),
            _ => Err(IngestError::Config { source_id: String::new(), message: format!("speed must be `instant` or a positive factor, got `{s}`") }),
        }
    }
}

/// Loads every observation in timestamp order (stable for equal timestamps). Rows with an
/// empty value are gaps and are not observations.
pub fn load(path: impl AsRef<Path>) -> Result<Vec<Observation>, IngestError> {
    let path = path.as_ref();
    let replay_err = |message: String| IngestError::Replay { path: path.display().to_string(), message };
    let file = File::open(path).map_err(|e| replay_err(e.to_string()))?;
    let readings = read_csv::<f64, _>(BufReader::new(file)).map_err(|e| replay_err(e.to_string()))?;
    let mut out: Vec<Observation> = readings
        .into_iter()
        .filter_map(|r| r.value.map(|value| Observation { sensor_id: r.sensor_id, timestamp: r.timestamp, value }))
        .collect();
    out.sort_by_key(|o| o.timestamp);
    Ok(out)
}

/// Emits observations in order, sleeping between distinct timestamps when paced.
pub fn replay(path: impl AsRef<Path>, speed: Speed) -> Result<impl Iterator<Item = Observation>, IngestError> {
    let obs = load(path)?;
    let mut previous = None;
    Ok(obs.into_iter().inspect(move |o| {
        if let (Speed::Factor(f), Some(prev)) = (speed, previous) {
            let gap_minutes = (o.timestamp - prev) as f64;
            if gap_minutes > 0.0 {
                std::thread::sleep(Duration::from_secs_f64(gap_minutes * 60.0 / f));
            }
        }
        previous = Some(o.timestamp);
    }))
}

/// Loads a file into a store as a single batch.
pub fn replay_into(path: impl AsRef<Path>, store: &EventStore) -> Result<usize, IngestError> {
    let obs = load(path)?;
    store.append(&obs)?;
    Ok(obs.len())
}
