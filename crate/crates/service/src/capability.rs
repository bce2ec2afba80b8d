//! Capability levels the configured twin can reach.

use serde::{Deserialize, Serialize};
use twin_core::house::SensorKind;

use crate::config::TwinConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub available: bool,
    pub reason: String,
}

/// Levels are cumulative: each is available only when every level below it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityReport {
    pub standalone: Level,
    pub descriptive: Level,
    pub diagnostic: Level,
    pub predictive: Level,
    pub prescriptive: Level,
}

impl CapabilityReport {
    /// Derived from the configuration alone, so the report is stable while serving.
    pub fn from_config(config: &TwinConfig) -> Self {
        let house = &config.house;
        let has_room_with = |kind| house.rooms.iter().any(|r| house.sensors_in(&r.name, kind).next().is_some());
        let own = [
            (config.validate().is_ok(), "a valid house model and configuration", "the configuration does not validate"),
            (!config.sources.is_empty(), "at least one live, replayed or simulated source", "no data source is configured"),
            (has_room_with(SensorKind::Temperature), "a room with placed temperature sensors for heat maps", "no room has a placed temperature sensor"),
            (!config.forecasting.models.is_empty(), "forecasting model families are configured", "no forecasting model family is configured"),
            (config.recommender.behavior_matrix.is_some(), "a behavior matrix for recommendations", "no behavior matrix is configured"),
        ];
        let mut below = true;
        let mut levels = own.into_iter().map(|(ok, yes, no)| {
            let level = match (below, ok) {
                (true, true) => Level { available: true, reason: yes.into() },
                (true, false) => Level { available: false, reason: no.into() },
                (false, _) => Level { available: false, reason: "a lower level is unavailable".into() },
            };
            below &= ok;
            level
        });
        let mut next = || levels.next().expect("five levels");
        CapabilityReport { standalone: next(), descriptive: next(), diagnostic: next(), predictive: next(), prescriptive: next() }
    }

    pub fn levels(&self) -> [(&'static str, &Level); 5] {
        [
            ("standalone", &self.standalone),
            ("descriptive", &self.descriptive),
            ("diagnostic", &self.diagnostic),
            ("predictive", &self.predictive),
            ("prescriptive", &self.prescriptive),
        ]
    }

    /// Highest available level, if any.
    pub fn highest(&self) -> Option<&'static str> {
        self.levels().into_iter().take_while(|(_, l)| l.available).last().map(|(n, _)| n)
    }
}
