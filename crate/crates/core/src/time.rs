//! Minute-resolution UTC timestamps.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, TimeZone, Timelike, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid timestamp `{input}`: {reason}")]
pub struct TimestampParseError {
    pub input: String,
    pub reason: String,
}

/// A UTC instant with whole-minute resolution, stored as minutes since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const MINUTES_PER_DAY: i64 = 1440;

    pub const fn from_minutes(minutes: i64) -> Self {
        Timestamp(minutes)
    }

    pub const fn minutes(self) -> i64 {
        self.0
    }

    /// Seconds are truncated towards the start of the minute.
    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Timestamp(dt.timestamp().div_euclid(60))
    }

    pub fn from_unix_seconds(secs: i64) -> Self {
        Timestamp(secs.div_euclid(60))
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.0 * 60, 0).single().expect("timestamp in chrono range")
    }

    pub fn from_ymd_hm(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Option<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day)?;
        let dt = date.and_hms_opt(hour, minute, 0)?;
        Some(Self::from_datetime(Utc.from_utc_datetime(&dt)))
    }

    pub fn date(self) -> NaiveDate {
        self.to_datetime().date_naive()
    }

    /// Minutes elapsed since 00:00 UTC of the same day.
    pub fn minute_of_day(self) -> i64 {
        self.0.rem_euclid(Self::MINUTES_PER_DAY)
    }

    pub fn start_of_day(self) -> Self {
        Timestamp(self.0 - self.minute_of_day())
    }

    pub fn add_minutes(self, minutes: i64) -> Self {
        Timestamp(self.0 + minutes)
    }

    pub fn hour_fraction(self) -> f64 {
        let dt = self.to_datetime();
        dt.hour() as f64 + dt.minute() as f64 / 60.0
    }

    pub fn to_rfc3339(self) -> String {
        self.to_datetime().to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn parse_rfc3339(s: &str) -> Result<Self, TimestampParseError> {
        DateTime::parse_from_rfc3339(s.trim())
            .map(|dt| Self::from_datetime(dt.with_timezone(&Utc)))
            .map_err(|e| TimestampParseError { input: s.to_string(), reason: e.to_string() })
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, minutes: i64) -> Timestamp {
        self.add_minutes(minutes)
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl FromStr for Timestamp {
    type Err = TimestampParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_rfc3339(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse_rfc3339(&s).map_err(serde::de::Error::custom)
    }
}
