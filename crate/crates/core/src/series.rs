//! Uniform time series: resampling, splitting, and the invertible transforms
//! consumed by the forecasting models.

use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{mean, std_pop, Scalar};
use crate::time::Timestamp;

/// Readings per day at the five-minute cadence used throughout the house data.
pub const STEPS_PER_DAY_5MIN: usize = 288;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("no data")]
    NoData,
    #[error("unsorted: timestamp {next} follows {prev}")]
    Unsorted { prev: Timestamp, next: Timestamp },
    #[error("step must be a positive number of minutes dividing a day, got {0}")]
    BadStep(u32),
    #[error("non-finite value at {0}")]
    NonFinite(Timestamp),
    #[error("empty split: every window needs at least one day")]
    EmptySplit,
    #[error("insufficient length: split needs {required} samples, series has {actual}")]
    InsufficientLength { required: usize, actual: usize },
    #[error("series of length {len} cannot be differenced {order} times")]
    TooShortForOrder { len: usize, order: usize },
    #[error("differencing order must be at least 1")]
    ZeroOrder,
    #[error("expected {expected} differencing anchors, got {actual}")]
    AnchorCount { expected: usize, actual: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("io: {0}")]
    Io(String),
}

/// Physical unit of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    #[default]
    Celsius,
    PercentRh,
    Ppm,
    /// Door/proximity state encoded as 0 (closed) or 1 (open).
    Boolean,
    Lux,
}

/// Irregular observations of one sensor, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries<T> {
    pub sensor_id: String,
    pub unit: Unit,
    pub points: Vec<(Timestamp, T)>,
}

impl<T: Scalar> RawSeries<T> {
    pub fn new(sensor_id: impl Into<String>, unit: Unit, points: Vec<(Timestamp, T)>) -> Self {
        RawSeries { sensor_id: sensor_id.into(), unit, points }
    }
}

/// A uniformly sampled series without gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<T> {
    pub sensor_id: String,
    pub start: Timestamp,
    pub step_minutes: u32,
    pub values: Vec<T>,
    pub unit: Unit,
}

impl<T: Scalar> TimeSeries<T> {
    pub fn new(sensor_id: impl Into<String>, start: Timestamp, step_minutes: u32, values: Vec<T>) -> Self {
        assert!(step_minutes > 0, "step_minutes must be positive");
        TimeSeries { sensor_id: sensor_id.into(), start, step_minutes, values, unit: Unit::Celsius }
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> i64 {
        self.step_minutes as i64
    }

    pub fn time_at(&self, index: usize) -> Timestamp {
        self.start + index as i64 * self.step()
    }

    /// Timestamp one step past the last sample.
    pub fn end(&self) -> Timestamp {
        self.time_at(self.len())
    }

    pub fn steps_per_day(&self) -> usize {
        1440 / self.step_minutes as usize
    }

    pub fn points(&self) -> impl Iterator<Item = (Timestamp, T)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| (self.time_at(i), v))
    }

    pub fn slice(&self, range: Range<usize>) -> TimeSeries<T> {
        TimeSeries {
            sensor_id: self.sensor_id.clone(),
            start: self.time_at(range.start),
            step_minutes: self.step_minutes,
            values: self.values[range].to_vec(),
            unit: self.unit,
        }
    }

    /// Index of the sample at `t`, if `t` lies on this series' grid.
    pub fn index_of(&self, t: Timestamp) -> Option<usize> {
        let offset = t - self.start;
        if offset < 0 || offset % self.step() != 0 {
            return None;
        }
        let i = (offset / self.step()) as usize;
        (i < self.len()).then_some(i)
    }

    /// Sample at or immediately before `t`.
    pub fn value_at_or_before(&self, t: Timestamp) -> Option<T> {
        let offset = t - self.start;
        if offset < 0 || self.is_empty() {
            return None;
        }
        let i = ((offset / self.step()) as usize).min(self.len() - 1);
        Some(self.values[i])
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> TimeSeries<T> {
        TimeSeries { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn extended(&self, more: &[T]) -> TimeSeries<T> {
        let mut out = self.clone();
        out.values.extend_from_slice(more);
        out
    }
}

/// How grid points between two observations are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapPolicy {
    Linear,
    CarryForward,
    /// Linear across gaps up to the given length, last observation carried forward beyond it.
    Hybrid { max_linear_gap_minutes: i64 },
}

impl Default for GapPolicy {
    fn default() -> Self {
        GapPolicy::Hybrid { max_linear_gap_minutes: 15 }
    }
}

impl GapPolicy {
    fn interpolates(self, gap_minutes: i64) -> bool {
        match self {
            GapPolicy::Linear => true,
            GapPolicy::CarryForward => false,
            GapPolicy::Hybrid { max_linear_gap_minutes } => gap_minutes <= max_linear_gap_minutes,
        }
    }
}

/// Resamples irregular observations onto a uniform grid starting at the first
/// observation. Values already on the grid pass through untouched; repeated
/// timestamps keep the last value.
pub fn resample<T: Scalar>(raw: &RawSeries<T>, step_minutes: u32, policy: GapPolicy) -> Result<TimeSeries<T>, SeriesError> {
    if step_minutes == 0 {
        return Err(SeriesError::BadStep(step_minutes));
    }
    let pts = &raw.points;
    let first = pts.first().ok_or(SeriesError::NoData)?;
    for w in pts.windows(2) {
        if w[1].0 < w[0].0 {
            return Err(SeriesError::Unsorted { prev: w[0].0, next: w[1].0 });
        }
    }
    if let Some(&(t, _)) = pts.iter().find(|(_, v)| !v.is_finite()) {
        return Err(SeriesError::NonFinite(t));
    }
    // Collapse duplicate timestamps, last one wins.
    let mut dedup: Vec<(Timestamp, T)> = Vec::with_capacity(pts.len());
    for &(t, v) in pts {
        match dedup.last_mut() {
            Some(last) if last.0 == t => last.1 = v,
            _ => dedup.push((t, v)),
        }
    }

    let step = step_minutes as i64;
    let start = first.0;
    let last = dedup.last().expect("non-empty").0;
    let n = ((last - start) / step) as usize + 1;
    let mut values = Vec::with_capacity(n);
    let mut j = 0usize;
    for k in 0..n {
        let t = start + k as i64 * step;
        while j + 1 < dedup.len() && dedup[j + 1].0 <= t {
            j += 1;
        }
        let (ta, va) = dedup[j];
        if ta == t || j + 1 == dedup.len() {
            values.push(va);
            continue;
        }
        let (tb, vb) = dedup[j + 1];
        let gap = tb - ta;
        if policy.interpolates(gap) {
            let frac = T::of((t - ta) as f64 / gap as f64);
            values.push(va + (vb - va) * frac);
        } else {
            values.push(va);
        }
    }
    Ok(TimeSeries { sensor_id: raw.sensor_id.clone(), start, step_minutes, values, unit: raw.unit })
}

/// Contiguous train → validation → test windows.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: TimeSeries<T>,
    pub validation: TimeSeries<T>,
    pub test: TimeSeries<T>,
}

/// Splits the leading `train + val + test` days of `series`.
pub fn split<T: Scalar>(series: &TimeSeries<T>, train_days: usize, val_days: usize, test_days: usize) -> Result<DatasetSplit<T>, SeriesError> {
    if train_days == 0 || val_days == 0 || test_days == 0 {
        return Err(SeriesError::EmptySplit);
    }
    if 1440 % series.step_minutes != 0 {
        return Err(SeriesError::BadStep(series.step_minutes));
    }
    let per_day = series.steps_per_day();
    let (a, b, c) = (train_days * per_day, val_days * per_day, test_days * per_day);
    let required = a + b + c;
    if series.len() < required {
        return Err(SeriesError::InsufficientLength { required, actual: series.len() });
    }
    Ok(DatasetSplit {
        train: series.slice(0..a),
        validation: series.slice(a..a + b),
        test: series.slice(a + b..required),
    })
}

/// A differenced series together with the leading raw values needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub struct Differenced<T> {
    pub series: TimeSeries<T>,
    pub order: usize,
    pub anchors: Vec<T>,
}

pub(crate) fn diff_values<T: Scalar>(values: &[T]) -> Vec<T> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn difference<T: Scalar>(series: &TimeSeries<T>, order: usize) -> Result<Differenced<T>, SeriesError> {
    if order == 0 {
        return Err(SeriesError::ZeroOrder);
    }
    if series.len() <= order {
        return Err(SeriesError::TooShortForOrder { len: series.len(), order });
    }
    let mut values = series.values.clone();
    for _ in 0..order {
        values = diff_values(&values);
    }
    Ok(Differenced {
        series: TimeSeries {
            sensor_id: series.sensor_id.clone(),
            start: series.time_at(order),
            step_minutes: series.step_minutes,
            values,
            unit: series.unit,
        },
        order,
        anchors: series.values[..order].to_vec(),
    })
}

/// Inverts [`difference`]; `anchors` are the first `order` raw values.
pub fn undifference<T: Scalar>(diffed: &TimeSeries<T>, anchors: &[T]) -> Result<TimeSeries<T>, SeriesError> {
    let order = anchors.len();
    if order == 0 {
        return Err(SeriesError::ZeroOrder);
    }
    // Leading value of each intermediate differencing level.
    let mut heads = Vec::with_capacity(order);
    let mut level = anchors.to_vec();
    for _ in 0..order {
        heads.push(level[0]);
        level = diff_values(&level);
    }
    let mut cur = diffed.values.clone();
    for head in heads.into_iter().rev() {
        let mut next = Vec::with_capacity(cur.len() + 1);
        // Neumaier-compensated running sum.
        let (mut acc, mut comp) = (head, T::zero());
        next.push(acc);
        for &d in &cur {
            let t = acc + d;
            if acc.abs() >= d.abs() {
                comp += (acc - t) + d;
            } else {
                comp += (d - t) + acc;
            }
            acc = t;
            next.push(acc + comp);
        }
        cur = next;
    }
    Ok(TimeSeries {
        sensor_id: diffed.sensor_id.clone(),
        start: diffed.start + -(order as i64) * diffed.step(),
        step_minutes: diffed.step_minutes,
        values: cur,
        unit: diffed.unit,
    })
}

/// A standardized series with the statistics needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized<T> {
    pub series: TimeSeries<T>,
    pub mean: T,
    pub std: T,
}

/// Standardizes with the population standard deviation.
pub fn normalize<T: Scalar>(series: &TimeSeries<T>) -> Result<Standardized<T>, SeriesError> {
    if series.is_empty() {
        return Err(SeriesError::NoData);
    }
    let m = mean(&series.values);
    let s = std_pop(&series.values);
    if !(s > T::zero()) {
        return Err(SeriesError::ZeroVariance);
    }
    Ok(Standardized { series: series.map_values(|v| (v - m) / s), mean: m, std: s })
}

pub fn denormalize<T: Scalar>(series: &TimeSeries<T>, mean: T, std: T) -> TimeSeries<T> {
    series.map_values(|v| v * std + mean)
}

/// One row of the `sensor_id,timestamp_rfc3339,value` exchange format.
#[derive(Debug, Clone, PartialEq)]
pub struct Reading<T> {
    pub sensor_id: String,
    pub timestamp: Timestamp,
    pub value: Option<T>,
}

pub const CSV_HEADER: [&str; 3] = ["sensor_id", "timestamp_rfc3339", "value"];

/// Parses the exchange CSV. Errors carry the 1-based line number.
pub fn read_csv<T: Scalar, R: Read>(reader: R) -> Result<Vec<Reading<T>>, SeriesError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| SeriesError::Csv { line: 1, message: e.to_string() })?.clone();
    if headers.len() < 3 || headers.iter().take(3).ne(CSV_HEADER.iter().copied()) {
        return Err(SeriesError::Csv { line: 1, message: format!("expected header `{}`", CSV_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| SeriesError::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| SeriesError::Csv { line, message };
        if rec.len() < 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let sensor_id = rec[0].to_string();
        if sensor_id.is_empty() {
            return Err(bad("empty sensor_id".into()));
        }
        let timestamp = Timestamp::parse_rfc3339(&rec[1]).map_err(|e| bad(e.to_string()))?;
        let value = match &rec[2] {
            "" => None,
            s => {
                let v: f64 = s.parse().map_err(|_| bad(format!("invalid value `{s}`")))?;
                if !v.is_finite() {
                    return Err(bad(format!("non-finite value `{s}`")));
                }
                Some(T::of(v))
            }
        };
        out.push(Reading { sensor_id, timestamp, value });
    }
    Ok(out)
}

pub fn write_csv<T: Scalar, W: Write>(writer: W, readings: &[Reading<T>]) -> Result<(), SeriesError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| SeriesError::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in readings {
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([r.sensor_id.as_str(), &r.timestamp.to_rfc3339(), &value]).map_err(io)?;
    }
    w.flush().map_err(|e| SeriesError::Io(e.to_string()))
}

impl<T: Scalar> TimeSeries<T> {
    pub fn to_readings(&self) -> Vec<Reading<T>> {
        self.points()
            .map(|(t, v)| Reading { sensor_id: self.sensor_id.clone(), timestamp: t, value: Some(v) })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(m: i64) -> Timestamp {
        Timestamp::from_minutes(27_000_000 + m)
    }

    fn raw(points: &[(i64, f64)]) -> RawSeries<f64> {
        RawSeries::new("s", Unit::Celsius, points.iter().map(|&(m, v)| (t(m), v)).collect())
    }

    #[test]
    fn on_grid_values_pass_through() {
        let r = raw(&[(0, 1.25), (5, -3.5), (10, 7.0)]);
        let s = resample(&r, 5, GapPolicy::default()).unwrap();
        assert_eq!(s.values, vec![1.25, -3.5, 7.0]);
        assert_eq!(s.start, t(0));
    }

    #[test]
    fn linear_midpoint() {
        let s = resample(&raw(&[(0, 10.0), (10, 12.0)]), 5, GapPolicy::default()).unwrap();
        assert_eq!(s.values, vec![10.0, 11.0, 12.0]);
    }

    #[test]
    fn long_gap_carries_forward() {
        let s = resample(&raw(&[(0, 10.0), (30, 16.0)]), 5, GapPolicy::default()).unwrap();
        assert_eq!(s.values, vec![10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 16.0]);
        let lin = resample(&raw(&[(0, 10.0), (15, 13.0)]), 5, GapPolicy::default()).unwrap();
        assert_eq!(lin.values, vec![10.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn ninety_days_has_25920_samples() {
        let pts: Vec<(i64, f64)> = (0..90 * 288).map(|i| (i as i64 * 5, (i % 7) as f64)).collect();
        let s = resample(&raw(&pts), 5, GapPolicy::default()).unwrap();
        assert_eq!(s.len(), 25_920);
    }

    #[test]
    fn resample_errors() {
        assert_eq!(resample(&raw(&[]), 5, GapPolicy::default()), Err(SeriesError::NoData));
        assert!(matches!(
            resample(&raw(&[(10, 1.0), (5, 2.0)]), 5, GapPolicy::default()),
            Err(SeriesError::Unsorted { .. })
        ));
        assert_eq!(resample(&raw(&[(0, 1.0)]), 0, GapPolicy::default()), Err(SeriesError::BadStep(0)));
    }

    #[test]
    fn duplicate_timestamps_keep_last() {
        let s = resample(&raw(&[(0, 1.0), (0, 2.0), (5, 3.0)]), 5, GapPolicy::default()).unwrap();
        assert_eq!(s.values, vec![2.0, 3.0]);
    }

    fn days(n: usize) -> TimeSeries<f64> {
        TimeSeries::new("s", t(0), 5, (0..n * 288).map(|i| i as f64).collect())
    }

    #[test]
    fn split_lengths_and_contiguity() {
        let sp = split(&days(90), 70, 10, 10).unwrap();
        assert_eq!((sp.train.len(), sp.validation.len(), sp.test.len()), (20160, 2880, 2880));
        assert_eq!(sp.train.end(), sp.validation.start);
        assert_eq!(sp.validation.end(), sp.test.start);
        assert_eq!(sp.test.values[0], 23040.0);
    }

    #[test]
    fn split_rejects_degenerate_and_short() {
        assert_eq!(split(&days(90), 90, 0, 0), Err(SeriesError::EmptySplit));
        assert_eq!(
            split(&days(89), 70, 10, 10),
            Err(SeriesError::InsufficientLength { required: 25920, actual: 25632 })
        );
    }

    #[test]
    fn difference_examples() {
        let s = TimeSeries::new("s", t(0), 5, vec![1.0, 3.0, 6.0, 10.0]);
        let d = difference(&s, 1).unwrap();
        assert_eq!(d.series.values, vec![2.0, 3.0, 4.0]);
        assert_eq!(d.series.start, t(5));
        let c = TimeSeries::new("s", t(0), 5, vec![4.0; 6]);
        assert!(difference(&c, 2).unwrap().series.values.iter().all(|&v| v == 0.0));
        assert_eq!(
            difference(&s, 4).unwrap_err(),
            SeriesError::TooShortForOrder { len: 4, order: 4 }
        );
        let back = undifference(&d.series, &d.anchors).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn normalize_examples() {
        let s = TimeSeries::new("s", t(0), 5, vec![0.0_f64, 2.0]);
        let z = normalize(&s).unwrap();
        assert_eq!(z.series.values, vec![-1.0, 1.0]);
        assert_eq!((z.mean, z.std), (1.0, 1.0));
        let again = normalize(&z.series).unwrap();
        for (a, b) in again.series.values.iter().zip(&z.series.values) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = TimeSeries::new("s", t(0), 5, vec![3.0; 4]);
        assert_eq!(normalize(&flat).unwrap_err(), SeriesError::ZeroVariance);
    }

    #[test]
    fn csv_round_trip_with_missing_values() {
        let rows = vec![
            Reading { sensor_id: "2Fireplace".into(), timestamp: t(0), value: Some(21.5) },
            Reading { sensor_id: "2Fireplace".into(), timestamp: t(5), value: None },
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sensor_id,timestamp_rfc3339,value\n"));
        assert!(text.lines().nth(2).unwrap().ends_with(','));
        assert_eq!(read_csv::<f64, _>(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn csv_errors_report_line_numbers() {
        let text = "sensor_id,timestamp_rfc3339,value\na,2022-01-01T00:00:00Z,1\na,not-a-time,2\n";
        match read_csv::<f64, _>(text.as_bytes()) {
            Err(SeriesError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn difference_round_trip(values in prop::collection::vec(-10.0f64..10.0, 4..200), order in 1usize..4) {
            let s = TimeSeries::new("s", t(0), 5, values);
            let d = difference(&s, order).unwrap();
            let back = undifference(&d.series, &d.anchors).unwrap();
            prop_assert_eq!(back.start, s.start);
            // Higher orders compound the rounding of the forward differences.
            let tol = if order == 1 { 1e-12 } else { 1e-9 };
            for (a, b) in back.values.iter().zip(&s.values) {
                prop_assert!((a - b).abs() <= tol, "{} vs {}", a, b);
            }
        }

        #[test]
        fn normalize_round_trip(values in prop::collection::vec(-50.0f64..50.0, 2..200)) {
            let s = TimeSeries::new("s", t(0), 5, values);
            prop_assume!(std_pop(&s.values) > 1e-6);
            let z = normalize(&s).unwrap();
            prop_assert!(mean(&z.series.values).abs() < 1e-9);
            prop_assert!((std_pop(&z.series.values) - 1.0).abs() < 1e-9);
            let back = denormalize(&z.series, z.mean, z.std);
            for (a, b) in back.values.iter().zip(&s.values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn grid_points_survive_resampling(values in prop::collection::vec(-30.0f64..30.0, 1..60)) {
            // Every other grid point observed, step 10 between observations.
            let pts: Vec<(i64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as i64 * 10, v)).collect();
            let s = resample(&raw(&pts), 5, GapPolicy::default()).unwrap();
            for (i, v) in values.iter().enumerate() {
                prop_assert_eq!(s.values[2 * i].to_bits(), v.to_bits());
            }
        }
    }
}
