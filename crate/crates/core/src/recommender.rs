//! User-based collaborative filtering of fireplace lighting times.
//!
//! Days are items described by their outdoor temperature profile; users are
//! households described by the step at which they lit the fireplace on each day.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const STEPS_PER_DAY: usize = 288;
/// Largest consecutive rise (°C per step) that still counts as "not lit".
pub const LIGHTING_THRESHOLD_C: f64 = 1.0;
/// Floor applied to a scenario RMSE before taking its reciprocal.
pub const RMSE_EPSILON: f64 = 1e-6;
pub const DEFAULT_RMSE_THRESHOLD: f64 = 1.5;
pub const DEFAULT_MIN_CORR: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecommenderError {
    #[error("expected {expected} values, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("no similar scenarios")]
    NoSimilarScenarios,
    #[error("insufficient behavioral data")]
    InsufficientData,
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("invalid behavior matrix: {0}")]
    Invalid(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
}

/// Index of the largest rise between consecutive samples, if it exceeds the lighting threshold.
/// Equal maxima resolve to the earliest index; the index is that of the sample after the jump.
pub fn extract_lit_step<T: Scalar>(day: &[T]) -> Result<Option<u16>, RecommenderError> {
    if day.len() != STEPS_PER_DAY {
        return Err(RecommenderError::WrongLength { expected: STEPS_PER_DAY, actual: day.len() });
    }
    let mut best: Option<(usize, T)> = None;
    for i in 1..day.len() {
        let d = day[i] - day[i - 1];
        if d.is_finite() && best.is_none_or(|(_, b)| d > b) {
            best = Some((i, d));
        }
    }
    Ok(best.filter(|&(_, d)| d > T::of(LIGHTING_THRESHOLD_C)).map(|(i, _)| i as u16))
}

/// One day of one household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDay<T> {
    pub day: u32,
    pub outdoor_temps: Vec<T>,
    pub fireplace_lit_step: Option<u16>,
}

/// Users × days lit steps over a shared day axis with shared outdoor profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorMatrix<T> {
    days: Vec<u32>,
    outdoor: Vec<Vec<T>>,
    users: Vec<String>,
    lit: Vec<Vec<Option<u16>>>,
}

impl<T: Scalar> BehaviorMatrix<T> {
    /// `lit[u][j]` is user `u`'s lit step on `days[j]`.
    pub fn new(days: Vec<u32>, outdoor: Vec<Vec<T>>, users: Vec<String>, lit: Vec<Vec<Option<u16>>>) -> Result<Self, RecommenderError> {
        let invalid = |m: String| Err(RecommenderError::Invalid(m));
        if days.len() != outdoor.len() {
            return invalid(format!("{} days but {} outdoor profiles", days.len(), outdoor.len()));
        }
        if let Some(o) = outdoor.iter().find(|o| o.len() != STEPS_PER_DAY) {
            return Err(RecommenderError::WrongLength { expected: STEPS_PER_DAY, actual: o.len() });
        }
        if outdoor.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("non-finite outdoor temperature".into());
        }
        let mut sorted = days.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != days.len() {
            return invalid("duplicate day".into());
        }
        if users.len() != lit.len() || users.is_empty() {
            return invalid("need one lit-step row per user and at least one user".into());
        }
        let mut names = users.clone();
        names.sort();
        names.dedup();
        if names.len() != users.len() {
            return invalid("duplicate user".into());
        }
        if lit.iter().any(|row| row.len() != days.len()) {
            return invalid("lit-step row length differs from the day axis".into());
        }
        if lit.iter().flatten().flatten().any(|&s| s as usize >= STEPS_PER_DAY) {
            return invalid(format!("lit step outside [0, {}]", STEPS_PER_DAY - 1));
        }
        Ok(BehaviorMatrix { days, outdoor, users, lit })
    }

    /// Single-household matrix from its stored days.
    pub fn from_days(user: impl Into<String>, days: Vec<ScenarioDay<T>>) -> Result<Self, RecommenderError> {
        let (ids, (outdoor, lit)): (Vec<u32>, (Vec<Vec<T>>, Vec<Option<u16>>)) =
            days.into_iter().map(|d| (d.day, (d.outdoor_temps, d.fireplace_lit_step))).unzip();
        Self::new(ids, outdoor, vec![user.into()], vec![lit])
    }

    pub fn days(&self) -> &[u32] {
        &self.days
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn outdoor(&self, day: u32) -> Option<&[T]> {
        self.day_index(day).map(|j| self.outdoor[j].as_slice())
    }

    pub fn lit_step(&self, user: &str, day: u32) -> Option<u16> {
        let u = self.user_index(user)?;
        self.lit[u][self.day_index(day)?]
    }

    pub fn user_index(&self, user: &str) -> Option<usize> {
        self.users.iter().position(|u| u == user)
    }

    fn day_index(&self, day: u32) -> Option<usize> {
        self.days.iter().position(|&d| d == day)
    }

    /// Stored days of one user.
    pub fn scenario_days(&self, user: &str) -> Option<Vec<ScenarioDay<T>>> {
        let u = self.user_index(user)?;
        Some(
            self.days
                .iter()
                .zip(&self.outdoor)
                .zip(&self.lit[u])
                .map(|((&day, o), &l)| ScenarioDay { day, outdoor_temps: o.clone(), fireplace_lit_step: l })
                .collect(),
        )
    }

    /// The matrix with one day column removed.
    pub fn without_day(&self, day: u32) -> Self {
        let keep: Vec<usize> = (0..self.days.len()).filter(|&j| self.days[j] != day).collect();
        BehaviorMatrix {
            days: keep.iter().map(|&j| self.days[j]).collect(),
            outdoor: keep.iter().map(|&j| self.outdoor[j].clone()).collect(),
            users: self.users.clone(),
            lit: self.lit.iter().map(|row| keep.iter().map(|&j| row[j]).collect()).collect(),
        }
    }

    /// Days on which any user lit the fireplace.
    pub fn event_days(&self) -> Vec<u32> {
        (0..self.days.len()).filter(|&j| self.lit.iter().any(|row| row[j].is_some())).map(|j| self.days[j]).collect()
    }

    /// Reads `user,day,step0..step287,lit_step`; every user row for a day must repeat the same profile.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RecommenderError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| RecommenderError::Csv { line: 1, message: e.to_string() })?.clone();
        let expected = csv_header();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(RecommenderError::Csv { line: 1, message: "header must be user,day,step0..step287,lit_step".into() });
        }
        let mut days: BTreeMap<u32, Vec<T>> = BTreeMap::new();
        let mut users: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, u32), Option<u16>> = BTreeMap::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k as u64 + 2;
            let err = |message: String| RecommenderError::Csv { line, message };
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let user = rec[0].to_string();
            let day: u32 = rec[1].parse().map_err(|_| err(format!("bad day `{}`", &rec[1])))?;
            let temps = (2..2 + STEPS_PER_DAY)
                .map(|c| rec[c].parse::<f64>().ok().filter(|v| v.is_finite()).map(T::of).ok_or_else(|| err(format!("bad temperature `{}`", &rec[c]))))
                .collect::<Result<Vec<T>, _>>()?;
            let lit_field = rec[2 + STEPS_PER_DAY].trim();
            let lit = if lit_field.is_empty() {
                None
            } else {
                let s: u16 = lit_field.parse().map_err(|_| err(format!("bad lit_step `{lit_field}`")))?;
                if s as usize >= STEPS_PER_DAY {
                    return Err(err(format!("lit_step {s} outside [0, 287]")));
                }
                Some(s)
            };
            match days.get(&day) {
                Some(existing) if *existing != temps => return Err(err(format!("day {day} has a different outdoor profile than earlier rows"))),
                Some(_) => {}
                None => {
                    days.insert(day, temps);
                }
            }
            let u = users.iter().position(|x| *x == user).unwrap_or_else(|| {
                users.push(user.clone());
                users.len() - 1
            });
            if cells.insert((u, day), lit).is_some() {
                return Err(err(format!("duplicate row for user {user} day {day}")));
            }
        }
        let ids: Vec<u32> = days.keys().copied().collect();
        let lit = (0..users.len()).map(|u| ids.iter().map(|&d| cells.get(&(u, d)).copied().flatten()).collect()).collect();
        Self::new(ids, days.into_values().collect(), users, lit)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RecommenderError> {
        let io = |e: csv::Error| RecommenderError::Csv { line: 0, message: e.to_string() };
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(csv_header()).map_err(io)?;
        for (u, user) in self.users.iter().enumerate() {
            for (j, &day) in self.days.iter().enumerate() {
                let mut rec = vec![user.clone(), day.to_string()];
                rec.extend(self.outdoor[j].iter().map(|v| v.to_string()));
                rec.push(self.lit[u][j].map(|s| s.to_string()).unwrap_or_default());
                w.write_record(&rec).map_err(io)?;
            }
        }
        w.flush().map_err(|e| RecommenderError::Csv { line: 0, message: e.to_string() })
    }
}

fn csv_header() -> Vec<String> {
    let mut h = vec!["user".to_string(), "day".to_string()];
    h.extend((0..STEPS_PER_DAY).map(|i| format!("step{i}")));
    h.push("lit_step".into());
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayWeight<T> {
    pub day: u32,
    pub rmse: T,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserWeight<T> {
    pub user: String,
    pub pearson: T,
    pub weight: T,
}

fn profile_rmse<T: Scalar>(a: &[T], b: &[T]) -> T {
    let ss: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    (ss / T::of_usize(a.len())).sqrt()
}

/// Reciprocal-RMSE weights of event days whose profile lies within `threshold` of `input`.
pub fn scenario_weights<T: Scalar>(input: &[T], matrix: &BehaviorMatrix<T>, threshold: T) -> Result<Vec<DayWeight<T>>, RecommenderError> {
    if input.len() != STEPS_PER_DAY {
        return Err(RecommenderError::WrongLength { expected: STEPS_PER_DAY, actual: input.len() });
    }
    let eps = T::of(RMSE_EPSILON);
    let out: Vec<DayWeight<T>> = matrix
        .event_days()
        .into_iter()
        .filter_map(|day| {
            let rmse = profile_rmse(input, matrix.outdoor(day).expect("event day exists"));
            (rmse <= threshold).then(|| DayWeight { day, rmse, weight: T::one() / rmse.max(eps) })
        })
        .collect();
    if out.is_empty() {
        return Err(RecommenderError::NoSimilarScenarios);
    }
    Ok(out)
}

/// Pearson correlation over the days both rows have lit steps; `None` with fewer than two such days
/// or a constant row.
pub fn pearson<T: Scalar>(a: &[Option<u16>], b: &[Option<u16>]) -> Option<T> {
    let pairs: Vec<(T, T)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some((T::of(f64::from((*x)?)), T::of(f64::from((*y)?)))))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = T::of_usize(pairs.len());
    let ma = pairs.iter().map(|p| p.0).sum::<T>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<T>() / n;
    let cov: T = pairs.iter().map(|&(x, y)| (x - ma) * (y - mb)).sum();
    let va: T = pairs.iter().map(|&(x, _)| (x - ma) * (x - ma)).sum();
    let vb: T = pairs.iter().map(|&(_, y)| (y - mb) * (y - mb)).sum();
    let den = va.sqrt() * vb.sqrt();
    (den > T::zero()).then(|| (cov / den).max(-T::one()).min(T::one()))
}

/// The target (weight 1) plus every other user whose correlation with it is at least `min_corr`.
pub fn user_weights<T: Scalar>(target: &str, matrix: &BehaviorMatrix<T>, min_corr: T) -> Result<Vec<UserWeight<T>>, RecommenderError> {
    let t = matrix.user_index(target).ok_or_else(|| RecommenderError::UnknownUser(target.to_string()))?;
    let mut out = vec![UserWeight { user: target.to_string(), pearson: T::one(), weight: T::one() }];
    for (u, name) in matrix.users.iter().enumerate() {
        if u == t {
            continue;
        }
        if let Some(r) = pearson::<T>(&matrix.lit[t], &matrix.lit[u]) {
            if r >= min_corr && r > T::zero() {
                out.push(UserWeight { user: name.clone(), pearson: r, weight: r });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommenderConfig<T> {
    pub rmse_threshold: T,
    pub min_corr: T,
}

impl<T: Scalar> Default for RecommenderConfig<T> {
    fn default() -> Self {
        RecommenderConfig { rmse_threshold: T::of(DEFAULT_RMSE_THRESHOLD), min_corr: T::of(DEFAULT_MIN_CORR) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResult<T> {
    pub recommended_step: u16,
    /// Unrounded Pearson-weighted step.
    pub raw_step: T,
    pub contributing_days: Vec<DayWeight<T>>,
    pub contributing_users: Vec<UserWeight<T>>,
    /// RMSE-weighted step of each contributing user, in the order of `contributing_users`.
    pub per_user_steps: Vec<T>,
}

/// Recommends the step at which `target` should light the fireplace on a day shaped like `input`.
pub fn recommend<T: Scalar>(input: &[T], matrix: &BehaviorMatrix<T>, target: &str, config: &RecommenderConfig<T>) -> Result<RecommendationResult<T>, RecommenderError> {
    let users = user_weights(target, matrix, config.min_corr)?;
    let days = scenario_weights(input, matrix, config.rmse_threshold)?;
    let mut used_days = vec![false; days.len()];
    let mut contributing_users = Vec::new();
    let mut per_user_steps = Vec::new();
    for uw in users {
        let u = matrix.user_index(&uw.user).expect("known user");
        let (mut num, mut den) = (T::zero(), T::zero());
        for (k, dw) in days.iter().enumerate() {
            let j = matrix.day_index(dw.day).expect("known day");
            if let Some(step) = matrix.lit[u][j] {
                num += dw.weight * T::of(f64::from(step));
                den += dw.weight;
                used_days[k] = true;
            }
        }
        if den > T::zero() {
            per_user_steps.push(num / den);
            contributing_users.push(uw);
        }
    }
    if contributing_users.is_empty() {
        return Err(RecommenderError::InsufficientData);
    }
    let total: T = contributing_users.iter().map(|u| u.weight).sum();
    let raw_step = contributing_users.iter().zip(&per_user_steps).map(|(u, &s)| u.weight * s).sum::<T>() / total;
    let recommended_step = raw_step.round().max(T::zero()).min(T::of_usize(STEPS_PER_DAY - 1)).as_f64() as u16;
    let contributing_days = days.into_iter().zip(used_days).filter(|(_, used)| *used).map(|(d, _)| d).collect();
    Ok(RecommendationResult { recommended_step, raw_step, contributing_days, contributing_users, per_user_steps })
}

/// Seeded stand-in for the observed household: 102 winter days, eight of them
/// with a lighting event. For event day 23 exactly days 1, 2 and 25 fall within
/// the default RMSE threshold among the other event days.
#[derive(Debug, Clone)]
pub struct SyntheticBehavior {
    pub matrix: BehaviorMatrix<f64>,
    /// Fireplace temperature of the observed household for every day, from which its lit steps were extracted.
    pub fireplace: Vec<Vec<f64>>,
}

pub const SYNTHETIC_DAYS: u32 = 102;
pub const SYNTHETIC_EVENT_DAYS: [u32; 8] = [1, 2, 9, 23, 25, 47, 68, 90];
pub const SYNTHETIC_HOLDOUT_DAY: u32 = 23;
pub const OBSERVED_USER: &str = "house";
/// Seed of the shipped behavior matrix fixture.
pub const SYNTHETIC_SEED: u64 = 7;

/// Daily mean outdoor temperature of each event day; days 1, 2, 25 sit close to day 23.
const EVENT_MEANS: [f64; 8] = [-5.6, -4.5, 1.5, -5.0, -5.9, -12.0, 4.0, -15.0];
/// Lighting time of the observed household on each event day.
const EVENT_STEPS: [u16; 8] = [198, 211, 95, 205, 207, 240, 150, 180];

fn diurnal(mean: f64, amplitude: f64, noise: &[f64]) -> Vec<f64> {
    (0..STEPS_PER_DAY)
        .map(|i| {
            let phase = std::f64::consts::TAU * (i as f64 - 90.0) / STEPS_PER_DAY as f64;
            // Sensor resolution.
            ((mean + amplitude * phase.sin() + noise[i]) * 100.0).round() / 100.0
        })
        .collect()
}

/// Builds the synthetic behavior matrix. Artificial households follow the observed
/// one with a personal offset and jitter; one lights at mirrored times.
pub fn synthetic_behavior(seed: u64) -> SyntheticBehavior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.25).expect("valid sigma");
    let mut outdoor = Vec::new();
    let mut fireplace = Vec::new();
    let mut lit = Vec::new();
    for day in 1..=SYNTHETIC_DAYS {
        let noise: Vec<f64> = (0..STEPS_PER_DAY).map(|_| jitter.sample(&mut rng)).collect();
        let event = SYNTHETIC_EVENT_DAYS.iter().position(|&d| d == day);
        let mean = match event {
            Some(k) => EVENT_MEANS[k],
            // Non-event days are mild, so nobody lights the fireplace.
            None => rng.random_range(3.0..9.0),
        };
        outdoor.push(diurnal(mean, 2.0, &noise));
        let mut fp: Vec<f64> = (0..STEPS_PER_DAY).map(|i| 21.0 + 0.3 * (std::f64::consts::TAU * i as f64 / 288.0).sin()).collect();
        if let Some(k) = event {
            let s = EVENT_STEPS[k] as usize;
            for (i, v) in fp.iter_mut().enumerate().skip(s) {
                let t = (i - s) as f64;
                *v += 6.0 * (1.0 - (-(t + 1.0) / 4.0).exp()) * (-t / 80.0).exp();
            }
        }
        lit.push(extract_lit_step(&fp).expect("288 samples"));
        fireplace.push(fp);
    }
    let mut users = vec![OBSERVED_USER.to_string()];
    let mut rows = vec![lit.clone()];
    let step_jitter = Normal::new(0.0, 4.0).expect("valid sigma");
    for (name, offset) in [("artificial-1", -6.0), ("artificial-2", 8.0), ("artificial-3", 0.0)] {
        users.push(name.to_string());
        rows.push(
            lit.iter()
                .map(|s| s.map(|s| (f64::from(s) + offset + step_jitter.sample(&mut rng)).round().clamp(0.0, 287.0) as u16))
                .collect(),
        );
    }
    users.push("artificial-mirror".to_string());
    let steps: Vec<f64> = lit.iter().flatten().map(|&s| f64::from(s)).collect();
    let mean = steps.iter().sum::<f64>() / steps.len() as f64;
    rows.push(lit.iter().map(|s| s.map(|s| (2.0 * mean - f64::from(s)).round().clamp(0.0, 287.0) as u16)).collect());
    let matrix = BehaviorMatrix::new((1..=SYNTHETIC_DAYS).collect(), outdoor, users, rows).expect("consistent synthetic matrix");
    SyntheticBehavior { matrix, fireplace }
}
