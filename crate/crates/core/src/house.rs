//! Static description of the instrumented house.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HouseError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("orientation {0} outside [0, 360)")]
    Orientation(f64),
    #[error("duplicate sensor id `{0}`")]
    DuplicateSensor(String),
    #[error("sensor `{0}` has a non-finite position")]
    BadPosition(String),
    #[error("room `{0}` needs a polygon with at least three vertices")]
    BadRoom(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Temperature,
    Humidity,
    Proximity,
    Water,
    Co2,
    Noise,
    Pressure,
    Light,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDescriptor<T> {
    pub id: String,
    pub kind: SensorKind,
    pub room: String,
    /// Metres in the house frame.
    pub position: [T; 3],
    #[serde(default)]
    pub floor: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room<T> {
    pub name: String,
    #[serde(default)]
    pub floor: i32,
    pub polygon: Vec<[T; 2]>,
}

impl<T: Scalar> Room<T> {
    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (T, T, T, T) {
        let mut b = (T::infinity(), T::infinity(), T::neg_infinity(), T::neg_infinity());
        for p in &self.polygon {
            b.0 = b.0.min(p[0]);
            b.1 = b.1.min(p[1]);
            b.2 = b.2.max(p[0]);
            b.3 = b.3.max(p[1]);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseModel<T> {
    pub latitude: T,
    pub longitude: T,
    #[serde(default)]
    pub altitude_m: T,
    /// Degrees clockwise from north.
    #[serde(default)]
    pub orientation_deg: T,
    #[serde(default)]
    pub sensors: Vec<SensorDescriptor<T>>,
    #[serde(default)]
    pub rooms: Vec<Room<T>>,
}

impl<T: Scalar> HouseModel<T> {
    /// A bare site with no sensors or rooms.
    pub fn site(latitude: T, longitude: T) -> Self {
        HouseModel {
            latitude,
            longitude,
            altitude_m: T::zero(),
            orientation_deg: T::zero(),
            sensors: Vec::new(),
            rooms: Vec::new(),
        }
    }

    /// The surveyed house near Trondheim.
    pub fn trondheim() -> Self {
        HouseModel {
            altitude_m: T::of(211.0),
            orientation_deg: T::of(203.0),
            ..Self::site(T::of(63.4305), T::of(10.3951))
        }
    }

    pub fn validate(&self) -> Result<(), HouseError> {
        let lat = self.latitude.as_f64();
        let lon = self.longitude.as_f64();
        let ori = self.orientation_deg.as_f64();
        if !(-90.0..=90.0).contains(&lat) {
            return Err(HouseError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(HouseError::Longitude(lon));
        }
        if !(0.0..360.0).contains(&ori) {
            return Err(HouseError::Orientation(ori));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.sensors {
            if !seen.insert(s.id.as_str()) {
                return Err(HouseError::DuplicateSensor(s.id.clone()));
            }
            if s.position.iter().any(|c| !c.is_finite()) {
                return Err(HouseError::BadPosition(s.id.clone()));
            }
        }
        for r in &self.rooms {
            if r.polygon.len() < 3 {
                return Err(HouseError::BadRoom(r.name.clone()));
            }
        }
        Ok(())
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorDescriptor<T>> {
        self.sensors.iter().find(|s| s.id == id)
    }

    pub fn room(&self, name: &str) -> Option<&Room<T>> {
        self.rooms.iter().find(|r| r.name == name)
    }

    pub fn sensors_in<'a>(&'a self, room: &'a str, kind: SensorKind) -> impl Iterator<Item = &'a SensorDescriptor<T>> + 'a {
        self.sensors.iter().filter(move |s| s.room == room && s.kind == kind)
    }
}
