//! Seeded stand-in for the instrumented house.
//!
//! Every channel is a deterministic function of the configuration and seed:
//! the fireplace follows a daily sinusoid plus lighting events with a fast
//! ramp and slow decay; the second-floor channels are affine in lagged
//! fireplace values; a ground-floor office warms while its door is open.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use chrono::{Datelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use twin_core::forecasting::{FIREPLACE_SENSOR, SECOND_FLOOR_TARGETS};
use twin_core::house::{HouseModel, Room, SensorDescriptor, SensorKind};
use twin_core::series::{write_csv, Reading};
use twin_core::Timestamp;

use crate::{IngestError, Observation};

pub const OUTDOOR_SENSOR: &str = "Outdoor";
pub const OFFICE_SENSOR: &str = "1Office";
pub const OFFICE_DOOR_SENSOR: &str = "1OfficeDoor";
pub const CO2_SENSOR: &str = "2LivingRoomCO2";

/// Offset, gain and lag (steps) of each second-floor channel against the fireplace.
/// Humidity channels fall as the fireplace heats.
pub const TARGET_COUPLING: [(&str, f64, f64, usize); 8] = [
    ("2BalconyEntrance", 2.0, 0.80, 6),
    ("2Cooking", 3.0, 0.85, 2),
    ("2LivingRoomCenter", 1.0, 0.95, 1),
    ("2LivingRoomCenterHumidity", 80.0, -1.8, 3),
    ("2LivingRoomHumidifier", 75.0, -1.5, 4),
    ("2LRWindow", 4.0, 0.70, 5),
    ("2OfficeDesk", 5.0, 0.75, 8),
    ("2Stair", 3.0, 0.80, 10),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub seed: u64,
    pub start: Timestamp,
    pub days: u32,
    pub step_minutes: u32,
    pub indoor_mean_c: f64,
    pub indoor_amplitude_c: f64,
    pub outdoor_mean_c: f64,
    pub outdoor_amplitude_c: f64,
    pub noise_sd_c: f64,
    /// Chance that the fireplace is lit on a given day.
    pub fireplace_probability: f64,
    pub fireplace_rise_c: f64,
    /// Lighting times are drawn uniformly in `[earliest, latest)` hours UT.
    pub fireplace_earliest_hour: u32,
    pub fireplace_latest_hour: u32,
    pub fireplace_decay_hours: f64,
    pub target_noise_sd: f64,
    /// Office occupied on weekdays between these hours UT.
    pub office_open_hour: u32,
    pub office_close_hour: u32,
    pub office_rise_c: f64,
    /// When set, a channel reports only after changing by at least this much or after 15 silent minutes.
    pub significant_change_c: Option<f64>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            seed: 42,
            start: Timestamp::from_ymd_hm(2022, 1, 1, 0, 0).expect("valid date"),
            days: 90,
            step_minutes: 5,
            indoor_mean_c: 21.0,
            indoor_amplitude_c: 1.0,
            outdoor_mean_c: -3.0,
            outdoor_amplitude_c: 3.0,
            noise_sd_c: 0.05,
            fireplace_probability: 0.8,
            fireplace_rise_c: 5.0,
            fireplace_earliest_hour: 16,
            fireplace_latest_hour: 19,
            fireplace_decay_hours: 2.0,
            target_noise_sd: 0.01,
            office_open_hour: 11,
            office_close_hour: 14,
            office_rise_c: 1.5,
            significant_change_c: None,
        }
    }
}

/// Heartbeat interval of a change-driven channel.
pub const HEARTBEAT_MINUTES: i64 = 15;

impl SimulatorConfig {
    /// Reads the optional `seed`, `days`, `start` and `significant_change_c` credential fields.
    pub fn from_credentials(source_id: &str, creds: &BTreeMap<String, String>) -> Result<Self, IngestError> {
        let bad = |k: &str, v: &str| IngestError::Config { source_id: source_id.to_string(), message: format!("invalid {k} `{v}`") };
        let mut c = SimulatorConfig::default();
        for (k, v) in creds {
            match k.as_str() {
                "seed" => c.seed = v.parse().map_err(|_| bad(k, v))?,
                "days" => c.days = v.parse().map_err(|_| bad(k, v))?,
                "start" => c.start = Timestamp::parse_rfc3339(v).map_err(|_| bad(k, v))?,
                "significant_change_c" => c.significant_change_c = Some(v.parse().map_err(|_| bad(k, v))?),
                other => {
                    return Err(IngestError::Config { source_id: source_id.to_string(), message: format!("unknown simulator field `{other}`") })
                }
            }
        }
        c.validate(source_id)?;
        Ok(c)
    }

    pub fn validate(&self, source_id: &str) -> Result<(), IngestError> {
        let err = |m: &str| Err(IngestError::Config { source_id: source_id.to_string(), message: m.to_string() });
        if self.days == 0 {
            return err("days must be positive");
        }
        if self.step_minutes == 0 || 1440 % self.step_minutes != 0 {
            return err("step_minutes must divide a day");
        }
        if !(0.0..=1.0).contains(&self.fireplace_probability) {
            return err("fireplace_probability must lie in [0, 1]");
        }
        if self.fireplace_earliest_hour >= self.fireplace_latest_hour || self.fireplace_latest_hour > 24 {
            return err("fireplace hours must satisfy earliest < latest <= 24");
        }
        if self.office_open_hour >= self.office_close_hour || self.office_close_hour > 24 {
            return err("office hours must satisfy open < close <= 24");
        }
        if !(self.noise_sd_c >= 0.0 && self.target_noise_sd >= 0.0 && self.fireplace_decay_hours > 0.0) {
            return err("noise levels must be non-negative and the decay positive");
        }
        if self.significant_change_c.is_some_and(|c| !(c > 0.0)) {
            return err("significant_change_c must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub observations: Vec<Observation>,
    /// Grid time of each lighting event.
    pub fireplace_lit: Vec<Timestamp>,
    /// Door-open and door-close times of each office episode.
    pub office_episodes: Vec<(Timestamp, Timestamp)>,
}

impl Simulation {
    /// Values of one channel on its reporting grid.
    pub fn channel(&self, sensor_id: &str) -> Vec<(Timestamp, f64)> {
        self.observations.iter().filter(|o| o.sensor_id == sensor_id).map(|o| (o.timestamp, o.value)).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), IngestError> {
        let readings: Vec<Reading<f64>> = self
            .observations
            .iter()
            .map(|o| Reading { sensor_id: o.sensor_id.clone(), timestamp: o.timestamp, value: Some(o.value) })
            .collect();
        write_csv(writer, &readings).map_err(|e| IngestError::Io(e.to_string()))
    }
}

fn fireplace_bump(steps_since: usize, step_minutes: f64, rise: f64, decay_minutes: f64) -> f64 {
    let m = steps_since as f64 * step_minutes;
    rise * (1.0 - (-(m + step_minutes) / 10.0).exp()) * (-m / decay_minutes).exp()
}

pub fn simulate(config: &SimulatorConfig) -> Result<Simulation, IngestError> {
    config.validate("simulator")?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let step = config.step_minutes as usize;
    let per_day = 1440 / step;
    let n = per_day * config.days as usize;
    let time = |i: usize| config.start + (i * step) as i64;
    let minute_of_day = |i: usize| time(i).minute_of_day() as f64;
    let noise = Normal::new(0.0, config.noise_sd_c.max(1e-12)).expect("finite sd");
    let target_noise = Normal::new(0.0, config.target_noise_sd.max(1e-12)).expect("finite sd");

    let mut lit_steps = Vec::new();
    let mut office = Vec::new();
    for d in 0..config.days as usize {
        let day_start = d * per_day;
        if rng.random_bool(config.fireplace_probability) {
            let lo = config.fireplace_earliest_hour as usize * 60 / step;
            let hi = config.fireplace_latest_hour as usize * 60 / step;
            lit_steps.push(day_start + rng.random_range(lo..hi));
        }
        let weekday = time(day_start).date().weekday();
        if !matches!(weekday, Weekday::Sat | Weekday::Sun) {
            office.push((day_start + config.office_open_hour as usize * 60 / step, day_start + config.office_close_hour as usize * 60 / step));
        }
    }

    let decay = config.fireplace_decay_hours * 60.0;
    let mut fire = vec![0.0; n];
    let mut bump = vec![0.0; n];
    for &s in &lit_steps {
        // Contributions below a thousandth of a degree are dropped.
        let reach = ((decay * (config.fireplace_rise_c / 1e-3).ln().max(1.0)) / step as f64).ceil() as usize;
        for i in s..(s + reach).min(n) {
            bump[i] += fireplace_bump(i - s, step as f64, config.fireplace_rise_c, decay);
        }
    }
    for (i, f) in fire.iter_mut().enumerate() {
        let phase = TAU * (minute_of_day(i) - 540.0) / 1440.0;
        *f = config.indoor_mean_c + config.indoor_amplitude_c * phase.sin() + bump[i] + noise.sample(&mut rng);
    }

    let mut channels: Vec<(&str, Vec<f64>)> = Vec::new();
    let outdoor_days: Vec<f64> = (0..config.days).map(|_| rng.random_range(-4.0..4.0)).collect();
    channels.push((
        OUTDOOR_SENSOR,
        (0..n)
            .map(|i| {
                let phase = TAU * (minute_of_day(i) - 540.0) / 1440.0;
                config.outdoor_mean_c + outdoor_days[i / per_day] + config.outdoor_amplitude_c * phase.sin() + noise.sample(&mut rng)
            })
            .collect(),
    ));
    channels.push((FIREPLACE_SENSOR, fire.clone()));
    debug_assert!(TARGET_COUPLING.iter().map(|c| c.0).eq(SECOND_FLOOR_TARGETS));
    for &(id, offset, gain, lag) in &TARGET_COUPLING {
        channels.push((id, (0..n).map(|i| offset + gain * fire[i.saturating_sub(lag)] + target_noise.sample(&mut rng)).collect()));
    }
    let co2_noise = Normal::new(0.0, 5.0).expect("finite sd");
    channels.push((CO2_SENSOR, (0..n).map(|i| 420.0 + 60.0 * bump[i] + co2_noise.sample(&mut rng)).collect()));

    let mut office_temp = vec![0.0; n];
    let mut door = vec![0.0; n];
    let tau = 30.0;
    for (i, v) in office_temp.iter_mut().enumerate() {
        let phase = TAU * (minute_of_day(i) - 540.0) / 1440.0;
        *v = 20.0 + 0.2 * phase.sin() + noise.sample(&mut rng) * 0.2;
    }
    for &(o, c) in &office {
        for i in o..n {
            let warm = if i < c {
                door[i] = 1.0;
                1.0 - (-(((i - o) * step) as f64) / tau).exp()
            } else {
                (1.0 - (-(((c - o) * step) as f64) / tau).exp()) * (-(((i - c) * step) as f64) / tau).exp()
            };
            if warm < 1e-4 && i >= c {
                break;
            }
            office_temp[i] += config.office_rise_c * warm;
        }
    }
    channels.push((OFFICE_SENSOR, office_temp));

    let mut observations = Vec::with_capacity(n * (channels.len() + 1));
    for (id, values) in &channels {
        emit(&mut observations, id, values, config, &time);
    }
    // The door reports on every change and at the first step.
    for i in 0..n {
        if i == 0 || door[i] != door[i - 1] {
            observations.push(Observation { sensor_id: OFFICE_DOOR_SENSOR.into(), timestamp: time(i), value: door[i] });
        }
    }
    observations.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.sensor_id.cmp(&b.sensor_id)));
    Ok(Simulation {
        observations,
        fireplace_lit: lit_steps.iter().map(|&s| time(s)).collect(),
        office_episodes: office.iter().map(|&(o, c)| (time(o), time(c))).collect(),
    })
}

fn emit(out: &mut Vec<Observation>, id: &str, values: &[f64], config: &SimulatorConfig, time: &impl Fn(usize) -> Timestamp) {
    let mut last: Option<(Timestamp, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        let t = time(i);
        let report = match (config.significant_change_c, last) {
            (Some(th), Some((lt, lv))) => (v - lv).abs() >= th || t - lt >= HEARTBEAT_MINUTES,
            _ => true,
        };
        if report {
            out.push(Observation { sensor_id: id.to_string(), timestamp: t, value: v });
            last = Some((t, v));
        }
    }
}

fn sensor(id: &str, kind: SensorKind, room: &str, floor: i32, position: [f64; 3]) -> SensorDescriptor<f64> {
    SensorDescriptor { id: id.into(), kind, room: room.into(), position, floor }
}

fn rect(name: &str, floor: i32, x0: f64, y0: f64, x1: f64, y1: f64) -> Room<f64> {
    Room { name: name.into(), floor, polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]] }
}

/// The house the simulator's channels belong to, sited in Trondheim.
pub fn simulated_house() -> HouseModel<f64> {
    use SensorKind::*;
    HouseModel {
        sensors: vec![
            sensor(FIREPLACE_SENSOR, Temperature, "living", 2, [1.0, 1.0, 0.5]),
            sensor("2LivingRoomCenter", Temperature, "living", 2, [4.0, 3.0, 1.2]),
            sensor("2LRWindow", Temperature, "living", 2, [7.0, 5.0, 1.2]),
            sensor("2Cooking", Temperature, "living", 2, [7.0, 1.0, 1.2]),
            sensor("2BalconyEntrance", Temperature, "living", 2, [1.0, 5.5, 1.2]),
            sensor("2Stair", Temperature, "living", 2, [4.0, 0.5, 1.2]),
            sensor("2LivingRoomCenterHumidity", Humidity, "living", 2, [4.0, 3.0, 1.2]),
            sensor("2LivingRoomHumidifier", Humidity, "living", 2, [6.0, 3.0, 0.8]),
            sensor(CO2_SENSOR, Co2, "living", 2, [4.0, 3.2, 1.2]),
            sensor("2OfficeDesk", Temperature, "study", 2, [9.5, 2.0, 0.8]),
            sensor(OFFICE_SENSOR, Temperature, "office", 1, [2.0, 2.0, 1.0]),
            sensor(OFFICE_DOOR_SENSOR, Proximity, "office", 1, [0.1, 2.0, 1.0]),
            sensor(OUTDOOR_SENSOR, Temperature, "outdoor", 1, [-2.0, -2.0, 1.5]),
        ],
        rooms: vec![rect("living", 2, 0.0, 0.0, 8.0, 6.0), rect("study", 2, 8.0, 0.0, 11.0, 4.0), rect("office", 1, 0.0, 0.0, 4.0, 4.0)],
        ..HouseModel::trondheim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use twin_core::recommender::extract_lit_step;

    fn short() -> SimulatorConfig {
        SimulatorConfig { days: 14, ..SimulatorConfig::default() }
    }

    #[test]
    fn is_deterministic_per_seed() {
        let a = simulate(&short()).unwrap();
        assert_eq!(a, simulate(&short()).unwrap());
        let b = simulate(&SimulatorConfig { seed: 43, ..short() }).unwrap();
        assert_ne!(a.observations, b.observations);
    }

    #[test]
    fn every_channel_covers_the_grid() {
        let sim = simulate(&short()).unwrap();
        for id in [FIREPLACE_SENSOR, OUTDOOR_SENSOR, OFFICE_SENSOR, CO2_SENSOR].into_iter().chain(SECOND_FLOOR_TARGETS) {
            assert_eq!(sim.channel(id).len(), 14 * 288, "{id}");
        }
        assert!(simulated_house().validate().is_ok());
        for s in simulated_house().sensors {
            assert!(!sim.channel(&s.id).is_empty(), "{}", s.id);
        }
    }

    #[test]
    fn lighting_events_are_detectable() {
        let sim = simulate(&short()).unwrap();
        let fire: Vec<f64> = sim.channel(FIREPLACE_SENSOR).into_iter().map(|p| p.1).collect();
        assert!(!sim.fireplace_lit.is_empty());
        for lit in &sim.fireplace_lit {
            let d = ((*lit - sim.observations[0].timestamp) / 1440) as usize;
            let day = &fire[d * 288..(d + 1) * 288];
            let step = extract_lit_step(day).unwrap().expect("a lighting jump");
            assert_eq!(step as i64, lit.minute_of_day() / 5);
        }
    }

    #[test]
    fn weekday_office_episodes() {
        let sim = simulate(&short()).unwrap();
        // 2022-01-01 is a Saturday: 14 days hold ten weekdays.
        assert_eq!(sim.office_episodes.len(), 10);
        let door = sim.channel(OFFICE_DOOR_SENSOR);
        assert_eq!(door.iter().filter(|p| p.1 == 1.0).count(), 10);
        assert!(sim.office_episodes.iter().all(|(o, c)| o.minute_of_day() == 660 && c.minute_of_day() == 840));
    }

    #[test]
    fn significant_change_thins_quiet_channels() {
        let dense = simulate(&short()).unwrap();
        let sparse = simulate(&SimulatorConfig { significant_change_c: Some(0.3), ..short() }).unwrap();
        let a = dense.channel(OFFICE_SENSOR);
        let b = sparse.channel(OFFICE_SENSOR);
        assert!(b.len() < a.len());
        assert!(b.windows(2).all(|w| w[1].0 - w[0].0 <= HEARTBEAT_MINUTES));
    }

    #[test]
    fn config_from_credentials() {
        let creds: BTreeMap<String, String> = [("seed", "7"), ("days", "3")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let c = SimulatorConfig::from_credentials("sim", &creds).unwrap();
        assert_eq!((c.seed, c.days), (7, 3));
        let bad: BTreeMap<String, String> = [("days".to_string(), "many".to_string())].into();
        assert!(SimulatorConfig::from_credentials("sim", &bad).is_err());
    }
}
