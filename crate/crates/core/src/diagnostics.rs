//! Heat maps, temperature and CO2 color mappings, and occupancy inference.

use std::io::Write;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::series::TimeSeries;
use crate::time::Timestamp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("no data")]
    NoData,
    #[error("invalid heat map config: {0}")]
    Config(String),
    #[error("color range requires lo < hi, got [{lo}, {hi}]")]
    Range { lo: f64, hi: f64 },
    #[error("co2 concentration must be non-negative, got {0}")]
    NegativePpm(f64),
    #[error("non-finite input: {0}")]
    NonFinite(String),
}

/// `(alpha / 2) * |q - p|`.
pub fn weighted_distance<T: Scalar>(p: [T; 2], q: [T; 2], alpha: T) -> T {
    alpha / T::of(2.0) * euclidean(p, q)
}

fn euclidean<T: Scalar>(p: [T; 2], q: [T; 2]) -> T {
    (q[0] - p[0]).hypot(q[1] - p[1])
}

/// A cell is covered by a sensor when their plain distance is at most `alpha / 2`.
pub fn in_reach<T: Scalar>(sensor: [T; 2], cell: [T; 2], alpha: T) -> bool {
    euclidean(sensor, cell) <= alpha / T::of(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatMapConfig<T> {
    /// Cells per meter.
    pub resolution: u32,
    /// Reach parameter in meters; sensors color cells within `alpha / 2`.
    pub alpha: T,
}

impl<T: Scalar> Default for HeatMapConfig<T> {
    fn default() -> Self {
        HeatMapConfig { resolution: 10, alpha: T::of(4.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatSensor<T> {
    pub position: [T; 2],
    pub temperature: T,
}

/// Axis-aligned rectangle `[min, max]` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub min: [T; 2],
    pub max: [T; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatMapFrame<T> {
    pub room: String,
    pub bounds: Bounds<T>,
    pub resolution: u32,
    pub cols: usize,
    pub rows: usize,
    /// Row-major interpolated temperatures; `None` beyond every sensor's reach.
    pub cells: Vec<Option<T>>,
    pub min_temp: T,
    pub max_temp: T,
}

impl<T: Scalar> HeatMapFrame<T> {
    pub fn cell_center(&self, row: usize, col: usize) -> [T; 2] {
        cell_center(&self.bounds, self.resolution, row, col)
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<T> {
        self.cells[row * self.cols + col]
    }

    /// Color of a covered cell on the frame's min→max axis.
    pub fn color(&self, row: usize, col: usize) -> Option<[u8; 3]> {
        self.cell(row, col).map(|t| frame_color(t, self.min_temp, self.max_temp))
    }

    /// Grid document with base64 RGBA rows; uncovered cells are fully transparent.
    pub fn document(&self) -> HeatMapDocument {
        let rows = (0..self.rows)
            .map(|r| {
                let mut bytes = Vec::with_capacity(4 * self.cols);
                for c in 0..self.cols {
                    match self.color(r, c) {
                        Some([red, g, b]) => bytes.extend_from_slice(&[red, g, b, 255]),
                        None => bytes.extend_from_slice(&[0, 0, 0, 0]),
                    }
                }
                BASE64.encode(bytes)
            })
            .collect();
        HeatMapDocument {
            room: self.room.clone(),
            bounds: [
                [self.bounds.min[0].as_f64(), self.bounds.min[1].as_f64()],
                [self.bounds.max[0].as_f64(), self.bounds.max[1].as_f64()],
            ],
            resolution: self.resolution,
            cols: self.cols,
            rows: self.rows,
            min_temp: self.min_temp.as_f64(),
            max_temp: self.max_temp.as_f64(),
            rgba_rows: rows,
        }
    }

    /// `x,y,temperature` for every covered cell center.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "temperature"])?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if let Some(t) = self.cell(r, c) {
                    let [x, y] = self.cell_center(r, c);
                    w.write_record([x.to_string(), y.to_string(), t.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Serialized heat map: header plus one base64 string of RGBA bytes per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMapDocument {
    pub room: String,
    pub bounds: [[f64; 2]; 2],
    pub resolution: u32,
    pub cols: usize,
    pub rows: usize,
    pub min_temp: f64,
    pub max_temp: f64,
    pub rgba_rows: Vec<String>,
}

impl HeatMapDocument {
    /// Decoded RGBA bytes of one row.
    pub fn row_bytes(&self, row: usize) -> Option<Vec<u8>> {
        BASE64.decode(self.rgba_rows.get(row)?).ok()
    }
}

fn cell_center<T: Scalar>(b: &Bounds<T>, resolution: u32, row: usize, col: usize) -> [T; 2] {
    let size = T::one() / T::of(resolution as f64);
    [b.min[0] + (T::of_usize(col) + T::of(0.5)) * size, b.min[1] + (T::of_usize(row) + T::of(0.5)) * size]
}

/// Midpoint green stands in for the degenerate `lo == hi` interval.
fn frame_color<T: Scalar>(t: T, lo: T, hi: T) -> [u8; 3] {
    if hi > lo {
        temp_to_color(t, lo, hi).expect("lo < hi")
    } else {
        hsv_to_rgb(120.0)
    }
}

/// Interpolates sensor temperatures over the room grid by inverse squared
/// distance among in-reach sensors.
pub fn render_heatmap<T: Scalar>(room: &str, bounds: Bounds<T>, sensors: &[HeatSensor<T>], config: &HeatMapConfig<T>) -> Result<HeatMapFrame<T>, DiagnosticsError> {
    if config.resolution == 0 {
        return Err(DiagnosticsError::Config("resolution must be at least 1 cell per meter".into()));
    }
    if !(config.alpha > T::zero()) || !config.alpha.is_finite() {
        return Err(DiagnosticsError::Config("alpha must be positive".into()));
    }
    if !(bounds.max[0] > bounds.min[0] && bounds.max[1] > bounds.min[1]) {
        return Err(DiagnosticsError::Config("empty room bounds".into()));
    }
    if sensors.is_empty() {
        return Err(DiagnosticsError::NoData);
    }
    if sensors.iter().any(|s| !(s.temperature.is_finite() && s.position[0].is_finite() && s.position[1].is_finite())) {
        return Err(DiagnosticsError::NonFinite("sensor position or temperature".into()));
    }
    let res = T::of(config.resolution as f64);
    let cols = ((bounds.max[0] - bounds.min[0]) * res).ceil().as_f64() as usize;
    let rows = ((bounds.max[1] - bounds.min[1]) * res).ceil().as_f64() as usize;
    let min_temp = sensors.iter().map(|s| s.temperature).fold(T::infinity(), T::min);
    let max_temp = sensors.iter().map(|s| s.temperature).fold(T::neg_infinity(), T::max);
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let p = cell_center(&bounds, config.resolution, r, c);
            // Offsets from the first contributor keep constant fields exact.
            let (mut num, mut den) = (T::zero(), T::zero());
            let mut reference = None;
            let mut exact = None;
            for s in sensors.iter().filter(|s| in_reach(s.position, p, config.alpha)) {
                let d = euclidean(s.position, p);
                if d == T::zero() {
                    exact = Some(s.temperature);
                    break;
                }
                let base = *reference.get_or_insert(s.temperature);
                let w = T::one() / (d * d);
                num += w * (s.temperature - base);
                den += w;
            }
            cells.push(exact.or_else(|| reference.map(|base| base + num / den)));
        }
    }
    Ok(HeatMapFrame { room: room.to_string(), bounds, resolution: config.resolution, cols, rows, cells, min_temp, max_temp })
}

/// Hue in degrees: 240 (blue) at `lo` falling linearly to 0 (red) at `hi`; `t` is clamped.
pub fn temp_hue<T: Scalar>(t: T, lo: T, hi: T) -> Result<f64, DiagnosticsError> {
    if !(lo < hi) {
        return Err(DiagnosticsError::Range { lo: lo.as_f64(), hi: hi.as_f64() });
    }
    let f = ((t - lo) / (hi - lo)).max(T::zero()).min(T::one()).as_f64();
    Ok(240.0 * (1.0 - f))
}

/// Maps a temperature onto the blue→red hue axis at full saturation and value.
pub fn temp_to_color<T: Scalar>(t: T, lo: T, hi: T) -> Result<[u8; 3], DiagnosticsError> {
    Ok(hsv_to_rgb(temp_hue(t, lo, hi)?))
}

/// HSV with `s = v = 1` to 8-bit RGB.
pub fn hsv_to_rgb(hue: f64) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|v: f64| (v * 255.0).round() as u8)
}

/// Left-closed CO2 band limits in ppm and the opacity drawn for each band.
pub const CO2_BANDS: [(f64, f64); 4] = [(0.0, 0.0), (400.0, 0.33), (600.0, 0.66), (800.0, 1.0)];

/// Band index in `0..4` and its overlay opacity.
pub fn co2_band<T: Scalar>(ppm: T) -> Result<(u8, T), DiagnosticsError> {
    let v = ppm.as_f64();
    if v.is_nan() {
        return Err(DiagnosticsError::NonFinite("co2 concentration".into()));
    }
    if v < 0.0 {
        return Err(DiagnosticsError::NegativePpm(v));
    }
    let band = CO2_BANDS.iter().rposition(|&(lo, _)| v >= lo).expect("v >= 0");
    Ok((band as u8, T::of(CO2_BANDS[band].1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoorEvent {
    pub timestamp: Timestamp,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEvent<T> {
    pub room: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub peak_delta_c: T,
    pub door_event: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyConfig<T> {
    pub rise_threshold_c: T,
    pub window_minutes: u32,
}

impl<T: Scalar> Default for OccupancyConfig<T> {
    fn default() -> Self {
        OccupancyConfig { rise_threshold_c: T::of(0.5), window_minutes: 60 }
    }
}

/// Finds door-opened episodes followed by a clear temperature rise.
///
/// An episode starts at the door-open, needs a rise above the pre-open value
/// strictly greater than the threshold within the window, and ends where the
/// temperature starts to decay (the last sample near the peak before it falls
/// half a threshold below it), at a door-close preceding that decay, or when it
/// returns within half a threshold of the baseline, whichever comes first.
pub fn detect_occupancy<T: Scalar>(room: &str, temp: &TimeSeries<T>, door_events: &[DoorEvent], config: &OccupancyConfig<T>) -> Vec<OccupancyEvent<T>> {
    let thr = config.rise_threshold_c;
    let half = thr / T::of(2.0);
    let near = thr / T::of(4.0);
    let mut doors = door_events.to_vec();
    doors.sort_by_key(|d| d.timestamp);
    let mut events: Vec<OccupancyEvent<T>> = Vec::new();
    let v = &temp.values;
    for open in doors.iter().filter(|d| d.open) {
        let t_open = open.timestamp;
        if events.last().is_some_and(|e| t_open <= e.end) {
            continue;
        }
        let Some(base) = temp.value_at_or_before(t_open).filter(|b| b.is_finite()) else { continue };
        if t_open >= temp.end() {
            continue;
        }
        // First sample strictly after the door opened.
        let first = (((t_open - temp.start) / temp.step()) + 1).max(0) as usize;
        let limit = t_open + config.window_minutes as i64;
        let Some(rise) = (first..v.len()).take_while(|&i| temp.time_at(i) <= limit).find(|&i| v[i] - base > thr) else {
            continue;
        };
        let mut peak = v[rise];
        let mut peak_last = rise;
        let mut end_idx = v.len() - 1;
        let mut decayed_at = None;
        for i in rise + 1..v.len() {
            if v[i] > peak {
                peak = v[i];
            }
            if v[i] >= peak - near {
                peak_last = i;
            }
            if v[i] - base <= half {
                end_idx = i;
                decayed_at = Some(i);
                break;
            }
            if peak - v[i] >= half {
                end_idx = peak_last;
                decayed_at = Some(i);
                break;
            }
        }
        let mut end = temp.time_at(end_idx);
        if let Some(d) = decayed_at {
            let confirmed = temp.time_at(d);
            if let Some(close) = doors.iter().rev().find(|c| !c.open && c.timestamp > temp.time_at(rise) && c.timestamp <= confirmed) {
                end = close.timestamp;
            }
        }
        if end <= t_open {
            continue;
        }
        events.push(OccupancyEvent { room: room.to_string(), start: t_open, end, peak_delta_c: peak - base, door_event: t_open });
    }
    events
}
