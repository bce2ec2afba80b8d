//! Append-only per-sensor observation logs.
//!
//! Each sensor's log is an `Arc`'d vector kept sorted by time, so a snapshot is
//! a map of cheap clones and an append copies only the logs it touches. A batch
//! becomes visible atomically under the write lock, and the version counter is
//! bumped once per non-empty batch.
//!
//! On disk a store is a directory holding `log.csv` (the exchange CSV format,
//! appended batch by batch) and `index.json` (version and per-sensor extents).
//! The log is authoritative; the index is rewritten after every batch.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use twin_core::series::{read_csv, RawSeries, Unit, CSV_HEADER};
use twin_core::Timestamp;

use crate::{IngestError, Observation};

pub const LOG_FILE: &str = "log.csv";
pub const INDEX_FILE: &str = "index.json";

type Log = Arc<Vec<(Timestamp, f64)>>;

/// Immutable view of the store at one version.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreSnapshot {
    logs: BTreeMap<String, Log>,
    version: u64,
}

impl StoreSnapshot {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn sensor_ids(&self) -> impl Iterator<Item = &str> {
        self.logs.keys().map(String::as_str)
    }

    pub fn contains(&self, sensor_id: &str) -> bool {
        self.logs.contains_key(sensor_id)
    }

    /// Every stored point of a sensor, sorted by time.
    pub fn points(&self, sensor_id: &str) -> Result<&[(Timestamp, f64)], IngestError> {
        self.logs.get(sensor_id).map(|l| l.as_slice()).ok_or_else(|| IngestError::NotFound(sensor_id.to_string()))
    }

    /// Stored points in `[from, to]`.
    pub fn query(&self, sensor_id: &str, from: Timestamp, to: Timestamp) -> Result<&[(Timestamp, f64)], IngestError> {
        if from > to {
            return Err(IngestError::InvalidRange { from, to });
        }
        let pts = self.points(sensor_id)?;
        let lo = pts.partition_point(|p| p.0 < from);
        let hi = pts.partition_point(|p| p.0 <= to);
        Ok(&pts[lo..hi])
    }

    pub fn raw_series(&self, sensor_id: &str, unit: Unit) -> Result<RawSeries<f64>, IngestError> {
        Ok(RawSeries::new(sensor_id, unit, self.points(sensor_id)?.to_vec()))
    }

    /// Last point at or before `t`.
    pub fn value_at(&self, sensor_id: &str, t: Timestamp) -> Result<Option<(Timestamp, f64)>, IngestError> {
        let pts = self.points(sensor_id)?;
        let i = pts.partition_point(|p| p.0 <= t);
        Ok(i.checked_sub(1).map(|i| pts[i]))
    }

    /// Time of the newest point across all sensors.
    pub fn latest(&self) -> Option<Timestamp> {
        self.logs.values().filter_map(|l| l.last().map(|p| p.0)).max()
    }

    pub fn total_points(&self) -> usize {
        self.logs.values().map(|l| l.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    count: usize,
    first: Timestamp,
    last: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Index {
    version: u64,
    sensors: BTreeMap<String, IndexEntry>,
}

pub struct EventStore {
    state: RwLock<StoreSnapshot>,
    dir: Option<PathBuf>,
}

impl Default for EventStore {
    fn default() -> Self {
        EventStore::in_memory()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> IngestError {
    IngestError::Io(format!("{}: {e}", path.display()))
}

impl EventStore {
    pub fn in_memory() -> Self {
        EventStore { state: RwLock::new(StoreSnapshot::default()), dir: None }
    }

    /// Opens or creates a persistent store in `dir`, replaying its log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, IngestError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let log_path = dir.join(LOG_FILE);
        let mut snapshot = StoreSnapshot::default();
        if log_path.exists() {
            let file = File::open(&log_path).map_err(|e| io_err(&log_path, e))?;
            let readings = read_csv::<f64, _>(BufReader::new(file))
                .map_err(|e| IngestError::Replay { path: log_path.display().to_string(), message: e.to_string() })?;
            let batch: Vec<Observation> = readings
                .into_iter()
                .filter_map(|r| r.value.map(|value| Observation { sensor_id: r.sensor_id, timestamp: r.timestamp, value }))
                .collect();
            merge(&mut snapshot.logs, &batch);
            let rows = batch.len() as u64;
            snapshot.version = fs::read_to_string(dir.join(INDEX_FILE))
                .ok()
                .and_then(|s| serde_json::from_str::<Index>(&s).ok())
                .filter(|idx| idx.sensors == index_of(&snapshot).sensors)
                .map_or(rows, |idx| idx.version);
        } else {
            let mut w = csv::Writer::from_path(&log_path).map_err(|e| io_err(&log_path, e))?;
            w.write_record(CSV_HEADER).map_err(|e| io_err(&log_path, e))?;
            w.flush().map_err(|e| io_err(&log_path, e))?;
        }
        let store = EventStore { state: RwLock::new(snapshot), dir: Some(dir) };
        store.write_index(&store.snapshot())?;
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        self.state.read().expect("store lock poisoned").clone()
    }

    pub fn version(&self) -> u64 {
        self.state.read().expect("store lock poisoned").version
    }

    pub fn query(&self, sensor_id: &str, from: Timestamp, to: Timestamp) -> Result<Vec<(Timestamp, f64)>, IngestError> {
        Ok(self.state.read().expect("store lock poisoned").query(sensor_id, from, to)?.to_vec())
    }

    /// Appends a batch atomically and returns the new version. Non-finite values are rejected as a whole batch.
    pub fn append(&self, batch: &[Observation]) -> Result<u64, IngestError> {
        if let Some(o) = batch.iter().find(|o| !o.value.is_finite() || o.sensor_id.is_empty()) {
            return Err(IngestError::InvalidObservation(format!("{} at {}", o.sensor_id, o.timestamp)));
        }
        let mut state = self.state.write().expect("store lock poisoned");
        if batch.is_empty() {
            return Ok(state.version);
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(LOG_FILE);
            let file = OpenOptions::new().append(true).open(&path).map_err(|e| io_err(&path, e))?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            for o in batch {
                w.write_record([o.sensor_id.as_str(), &o.timestamp.to_rfc3339(), &o.value.to_string()]).map_err(|e| io_err(&path, e))?;
            }
            w.flush().map_err(|e| io_err(&path, e))?;
        }
        merge(&mut state.logs, batch);
        state.version += 1;
        if self.dir.is_some() {
            self.write_index(&state)?;
        }
        Ok(state.version)
    }

    fn write_index(&self, snapshot: &StoreSnapshot) -> Result<(), IngestError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
        let text = serde_json::to_string_pretty(&index_of(snapshot)).expect("index serializes");
        fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, dir.join(INDEX_FILE)).map_err(|e| io_err(&tmp, e))
    }
}

fn index_of(s: &StoreSnapshot) -> Index {
    Index {
        version: s.version,
        sensors: s
            .logs
            .iter()
            .filter_map(|(id, l)| Some((id.clone(), IndexEntry { count: l.len(), first: l.first()?.0, last: l.last()?.0 })))
            .collect(),
    }
}

fn merge(logs: &mut BTreeMap<String, Log>, batch: &[Observation]) {
    let mut by_sensor: BTreeMap<&str, Vec<(Timestamp, f64)>> = BTreeMap::new();
    for o in batch {
        by_sensor.entry(o.sensor_id.as_str()).or_default().push((o.timestamp, o.value));
    }
    for (id, mut pts) in by_sensor {
        let log = Arc::make_mut(logs.entry(id.to_string()).or_default());
        pts.sort_by_key(|p| p.0);
        let in_order = log.last().is_none_or(|l| pts.first().is_none_or(|f| l.0 <= f.0));
        log.extend(pts);
        if !in_order {
            // Stable, so equal timestamps keep arrival order.
            log.sort_by_key(|p| p.0);
        }
    }
}
