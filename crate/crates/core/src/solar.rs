//! Low-precision solar ephemeris: calendar date and UT to the sun's azimuth
//! and altitude, with every intermediate quantity exposed.
//!
//! Angles are in degrees throughout. Sidereal quantities are in hours and are
//! converted to degrees only when forming the hour angle.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::house::HouseModel;
use crate::scalar::{wrap_degrees, wrap_hours, Scalar};
use crate::time::Timestamp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolarError {
    #[error("date {0} outside the supported range 1900-03-01..=2100-02-28")]
    OutOfRange(String),
    #[error("invalid calendar date {year}-{month}-{day}")]
    InvalidDate { year: i32, month: u32, day: u32 },
    #[error("time of day {0} outside [0, 24)")]
    BadTime(f64),
    #[error("scan step must be 1 or 5 minutes, got {0}")]
    BadStep(u32),
    #[error("horizon mask: {0}")]
    Mask(String),
}

/// A validated Gregorian date inside the algorithm's precision range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CalendarDate {
    pub year: i32,
    pub month: u32,
    pub day: u32,
}

impl CalendarDate {
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self, SolarError> {
        let date = NaiveDate::from_ymd_opt(year, month, day).ok_or(SolarError::InvalidDate { year, month, day })?;
        Self::from_naive(date)
    }

    pub fn from_naive(date: NaiveDate) -> Result<Self, SolarError> {
        let lo = NaiveDate::from_ymd_opt(1900, 3, 1).expect("valid");
        let hi = NaiveDate::from_ymd_opt(2100, 2, 28).expect("valid");
        if date < lo || date > hi {
            return Err(SolarError::OutOfRange(date.to_string()));
        }
        Ok(CalendarDate { year: date.year(), month: date.month(), day: date.day() })
    }

    pub fn naive(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, self.day).expect("validated on construction")
    }

    /// Last day of the given month.
    pub fn last_of_month(year: i32, month: u32) -> Result<Self, SolarError> {
        let first_next = if month == 12 {
            NaiveDate::from_ymd_opt(year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(year, month + 1, 1)
        }
        .ok_or(SolarError::InvalidDate { year, month, day: 1 })?;
        Self::from_naive(first_next.pred_opt().expect("has predecessor"))
    }
}

impl std::str::FromStr for CalendarDate {
    type Err = SolarError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let d = NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .map_err(|_| SolarError::OutOfRange(format!("`{s}` is not YYYY-MM-DD")))?;
        Self::from_naive(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarInput<T> {
    pub date: CalendarDate,
    /// Universal time in hours, `[0, 24)`.
    pub t_ut: T,
    /// Geographic longitude, east positive.
    pub longitude: T,
    pub latitude: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarIntermediates<T> {
    /// Days from J2000 at 0h UT of the date.
    pub jd: T,
    pub jc: T,
    /// Days from J2000 at the input instant.
    pub jd_d: T,
    pub jc_d: T,
    pub t_sr: T,
    pub t_srut: T,
    pub t_lsr: T,
    pub l0: T,
    pub m0: T,
    pub c: T,
    pub lambda: T,
    pub beta: T,
    pub omega: T,
    pub alpha: T,
    pub delta: T,
    pub ha: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarResult<T> {
    /// Degrees clockwise from north, `[0, 360)`.
    pub azimuth_deg: T,
    pub altitude_deg: T,
    pub intermediates: SolarIntermediates<T>,
}

/// Days from J2000 at 0h UT, floor form valid for 1900-03-01..2100-02-28.
pub fn days_from_j2000<T: Scalar>(date: CalendarDate) -> T {
    let (y, m, d) = (date.year as i64, date.month as i64, date.day as i64);
    let whole = 367 * y - (7 * (y + (m + 9).div_euclid(12))).div_euclid(4) + (275 * m).div_euclid(9) + d;
    T::of(whole as f64 - 730_531.5)
}

/// Returns `(JD_d, JC_d)` for the instant `t_ut` hours into `date`.
pub fn julian_from_j2000<T: Scalar>(date: CalendarDate, t_ut: T) -> (T, T) {
    let jd_d = days_from_j2000::<T>(date) + t_ut / T::of(24.0);
    (jd_d, jd_d / T::of(36_525.0))
}

/// Greenwich sidereal time at 0h, at `t_ut`, and local sidereal time; hours in `[0, 24)`.
pub fn sidereal<T: Scalar>(jc: T, t_ut: T, longitude: T) -> (T, T, T) {
    let t_sr = T::of(6.6974) + T::of(2400.0513) * jc;
    let t_srut = t_sr + T::of(366.2422 / 365.2422) * t_ut;
    let t_lsr = t_srut + longitude / T::of(15.0);
    (wrap_hours(t_sr), wrap_hours(t_srut), wrap_hours(t_lsr))
}

/// Returns `(L0, M0, C, lambda)`.
pub fn sun_ecliptic<T: Scalar>(jc_d: T) -> (T, T, T, T) {
    let l0 = wrap_degrees(T::of(280.466) + T::of(36_000.770) * jc_d);
    let m0 = wrap_degrees(T::of(357.529) + T::of(35_999.050) * jc_d);
    let m_rad = m0.to_radians();
    let c = (T::of(1.915) - T::of(0.005) * jc_d) * m_rad.sin() + T::of(0.020) * (m_rad + m_rad).sin();
    (l0, m0, c, wrap_degrees(l0 + c))
}

/// Returns `(Omega, alpha, delta)` for ecliptic longitude `lambda` with zero ecliptic latitude.
pub fn sun_equatorial<T: Scalar>(lambda: T, jc_d: T) -> (T, T, T) {
    let omega = T::of(23.439) - T::of(0.013) * jc_d;
    let (sl, cl) = lambda.to_radians().sin_cos();
    let o = omega.to_radians();
    let alpha = wrap_degrees((sl * o.cos()).atan2(cl).to_degrees());
    let delta = clamp_unit(sl * o.sin()).asin().to_degrees();
    (omega, alpha, delta)
}

fn clamp_unit<T: Scalar>(x: T) -> T {
    x.max(-T::one()).min(T::one())
}

pub fn sun_horizontal<T: Scalar>(input: &SolarInput<T>) -> Result<SolarResult<T>, SolarError> {
    let t_ut = input.t_ut;
    if !(t_ut >= T::zero() && t_ut < T::of(24.0)) {
        return Err(SolarError::BadTime(t_ut.as_f64()));
    }
    let jd = days_from_j2000::<T>(input.date);
    let jc = jd / T::of(36_525.0);
    let (jd_d, jc_d) = julian_from_j2000(input.date, t_ut);
    let (t_sr, t_srut, t_lsr) = sidereal(jc, t_ut, input.longitude);
    let (l0, m0, c, lambda) = sun_ecliptic(jc_d);
    let (omega, alpha, delta) = sun_equatorial(lambda, jc_d);
    let ha = wrap_degrees(t_lsr * T::of(15.0) - alpha);

    let b = input.latitude.to_radians();
    let dr = delta.to_radians();
    let (sha, cha) = ha.to_radians().sin_cos();
    let altitude = clamp_unit(b.sin() * dr.sin() + b.cos() * dr.cos() * cha).asin().to_degrees();
    let azimuth = wrap_degrees((-sha).atan2(dr.tan() * b.cos() - b.sin() * cha).to_degrees());

    Ok(SolarResult {
        azimuth_deg: azimuth,
        altitude_deg: altitude,
        intermediates: SolarIntermediates {
            jd,
            jc,
            jd_d,
            jc_d,
            t_sr,
            t_srut,
            t_lsr,
            l0,
            m0,
            c,
            lambda,
            beta: T::zero(),
            omega,
            alpha,
            delta,
            ha,
        },
    })
}

/// Sun position for a UTC timestamp at the given site.
pub fn sun_at<T: Scalar>(t: Timestamp, latitude: T, longitude: T) -> Result<SolarResult<T>, SolarError> {
    let date = CalendarDate::from_naive(t.date())?;
    sun_horizontal(&SolarInput { date, t_ut: T::of(t.minute_of_day() as f64 / 60.0), longitude, latitude })
}

/// Horizon elevation per whole azimuth degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMask<T> {
    elevations: Vec<T>,
}

impl<T: Scalar> HorizonMask<T> {
    /// `elevations[i]` applies to azimuths in `[i, i + 1)`. Values must lie in `[0, 90]`.
    pub fn new(elevations: Vec<T>) -> Result<Self, SolarError> {
        if elevations.len() != 360 {
            return Err(SolarError::Mask(format!("expected 360 samples, got {}", elevations.len())));
        }
        if let Some((i, e)) = elevations.iter().enumerate().find(|(_, e)| !(**e >= T::zero() && **e <= T::of(90.0))) {
            return Err(SolarError::Mask(format!("elevation {e} at azimuth {i} outside [0, 90]")));
        }
        Ok(HorizonMask { elevations })
    }

    pub fn flat(elevation: T) -> Result<Self, SolarError> {
        Self::new(vec![elevation; 360])
    }

    pub fn elevation_at(&self, azimuth_deg: T) -> T {
        let i = wrap_degrees(azimuth_deg).floor().to_usize().unwrap_or(0).min(359);
        self.elevations[i]
    }

    /// Parses 360 lines of `azimuth_deg,elevation_deg`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, SolarError> {
        let mut elevations = vec![None; 360];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| SolarError::Mask(format!("line {}: {msg}", n + 1));
            let (az, el) = line.split_once(',').ok_or_else(|| bad("expected `azimuth_deg,elevation_deg`"))?;
            let az: f64 = az.trim().parse().map_err(|_| bad("bad azimuth"))?;
            let el: f64 = el.trim().parse().map_err(|_| bad("bad elevation"))?;
            if az.fract() != 0.0 || !(0.0..360.0).contains(&az) {
                return Err(bad("azimuth must be a whole degree in [0, 360)"));
            }
            elevations[az as usize] = Some(T::of(el));
        }
        let filled: Option<Vec<T>> = elevations.into_iter().collect();
        Self::new(filled.ok_or_else(|| SolarError::Mask("every azimuth 0..359 needs a sample".into()))?)
    }
}

/// Daylight summary for one UTC day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SunHours {
    pub date: CalendarDate,
    /// First lit sample; absent when the sun is never or always above the horizon.
    pub first_lit: Option<Timestamp>,
    pub last_lit: Option<Timestamp>,
    pub lit_minutes: u32,
}

/// Scans a UTC day; a sample is lit while the sun's altitude exceeds the
/// horizon elevation in its direction. Each lit sample counts `step_minutes`.
pub fn sun_hours<T: Scalar>(
    date: CalendarDate,
    house: &HouseModel<T>,
    mask: Option<&HorizonMask<T>>,
    step_minutes: u32,
) -> Result<SunHours, SolarError> {
    if step_minutes != 1 && step_minutes != 5 {
        return Err(SolarError::BadStep(step_minutes));
    }
    let midnight = Timestamp::from_ymd_hm(date.year, date.month, date.day, 0, 0).expect("validated date");
    let samples = 1440 / step_minutes;
    let mut first = None;
    let mut last = None;
    let mut lit = 0u32;
    for k in 0..samples {
        let minute = k * step_minutes;
        let r = sun_horizontal(&SolarInput {
            date,
            t_ut: T::of(minute as f64 / 60.0),
            longitude: house.longitude,
            latitude: house.latitude,
        })?;
        let horizon = mask.map_or(T::zero(), |m| m.elevation_at(r.azimuth_deg));
        if r.altitude_deg > horizon {
            let t = midnight + minute as i64;
            first.get_or_insert(t);
            last = Some(t);
            lit += 1;
        }
    }
    if lit == samples {
        first = None;
        last = None;
    }
    Ok(SunHours { date, first_lit: first, last_lit: last, lit_minutes: lit * step_minutes })
}

/// Sun hours on the last day of each month of `year`, scanned minute by minute.
pub fn monthly_sun_hours<T: Scalar>(year: i32, house: &HouseModel<T>, mask: Option<&HorizonMask<T>>) -> Result<Vec<SunHours>, SolarError> {
    (1..=12).map(|m| sun_hours(CalendarDate::last_of_month(year, m)?, house, mask, 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> CalendarDate {
        CalendarDate::new(y, m, d).unwrap()
    }

    #[test]
    fn j2000_anchor_is_exact() {
        assert_eq!(julian_from_j2000(date(2000, 1, 1), 12.0_f64), (0.0, 0.0));
        assert_eq!(julian_from_j2000(date(2000, 1, 2), 12.0_f64).0, 1.0);
        assert_eq!(julian_from_j2000(date(2000, 1, 1), 12.0_f32).0, 0.0);
    }

    #[test]
    fn date_range_is_enforced() {
        assert!(CalendarDate::new(1900, 2, 28).is_err());
        assert!(CalendarDate::new(1900, 3, 1).is_ok());
        assert!(CalendarDate::new(2100, 2, 28).is_ok());
        assert!(CalendarDate::new(2100, 3, 1).is_err());
        assert!(CalendarDate::new(2022, 2, 29).is_err());
        assert_eq!(CalendarDate::last_of_month(2024, 2).unwrap().day, 29);
        assert_eq!(CalendarDate::last_of_month(2022, 2).unwrap().day, 28);
    }

    #[test]
    fn sidereal_examples() {
        let (t_sr, _, _) = sidereal(0.0_f64, 0.0, 0.0);
        assert_eq!(t_sr, 6.6974);
        let (_, _, a) = sidereal(0.01_f64, 3.0, 0.0);
        let (_, _, b) = sidereal(0.01_f64, 3.0, 15.0);
        assert!((wrap_hours(b - a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ecliptic_constants() {
        let (l0, m0, c, _) = sun_ecliptic(0.0_f64);
        assert_eq!((l0, m0), (280.466, 357.529));
        assert!(c.is_finite());
        // Equation of centre vanishes where the mean anomaly does.
        let jc_zero_anomaly: f64 = (360.0 - 357.529) / 35_999.050;
        let (_, m0, c, _) = sun_ecliptic(jc_zero_anomaly);
        assert!(m0.abs() < 1e-9 || (m0 - 360.0).abs() < 1e-9);
        assert!(c.abs() < 1e-9);
    }

    #[test]
    fn equatorial_special_points() {
        let (omega, alpha, delta) = sun_equatorial(0.0_f64, 0.0);
        assert_eq!(omega, 23.439);
        assert_eq!((alpha, delta), (0.0, 0.0));
        let (omega, alpha, delta) = sun_equatorial(90.0_f64, 0.0);
        assert!((alpha - 90.0).abs() < 1e-9);
        assert!((delta - omega).abs() < 1e-9);
        // Quadrant preserved on the far side of the ecliptic.
        let (_, alpha, delta) = sun_equatorial(200.0_f64, 0.0);
        assert!(alpha > 180.0 && alpha < 270.0);
        assert!(delta < 0.0);
    }

    #[test]
    fn pole_altitude_equals_declination() {
        for h in [0.0, 5.5, 12.0, 18.25] {
            let r = sun_horizontal(&SolarInput { date: date(2022, 6, 1), t_ut: h, longitude: 10.0, latitude: 90.0_f64 }).unwrap();
            assert!((r.altitude_deg - r.intermediates.delta).abs() < 1e-9);
            assert_eq!(r.intermediates.beta, 0.0);
        }
    }

    #[test]
    fn longitude_shift_moves_hour_angle_by_fifteen_degrees() {
        let base = SolarInput { date: date(2022, 3, 7), t_ut: 9.0_f64, longitude: 10.0, latitude: 63.0 };
        let a = sun_horizontal(&base).unwrap();
        let b = sun_horizontal(&SolarInput { longitude: 25.0, ..base }).unwrap();
        assert!((wrap_degrees(b.intermediates.ha - a.intermediates.ha) - 15.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_time_outside_day() {
        let r = sun_horizontal(&SolarInput { date: date(2022, 3, 7), t_ut: 24.0_f64, longitude: 0.0, latitude: 0.0 });
        assert_eq!(r.unwrap_err(), SolarError::BadTime(24.0));
    }

    #[test]
    fn equinox_equator_has_twelve_hours() {
        let house = HouseModel::site(0.0_f64, 0.0);
        let h = sun_hours(date(2022, 3, 20), &house, None, 1).unwrap();
        assert!((h.lit_minutes as i32 - 720).abs() <= 20, "{}", h.lit_minutes);
        assert!(h.first_lit.is_some() && h.last_lit.is_some());
    }

    #[test]
    fn full_mask_blocks_all_light() {
        let house = HouseModel::<f64>::trondheim();
        let mask = HorizonMask::flat(90.0).unwrap();
        let h = sun_hours(date(2022, 6, 21), &house, Some(&mask), 5).unwrap();
        assert_eq!(h.lit_minutes, 0);
        assert_eq!(h.first_lit, None);
        assert_eq!(sun_hours(date(2022, 6, 21), &house, None, 2).unwrap_err(), SolarError::BadStep(2));
    }

    #[test]
    fn polar_day_and_night() {
        let house = HouseModel::site(80.0_f64, 0.0);
        let summer = sun_hours(date(2022, 6, 21), &house, None, 5).unwrap();
        assert_eq!((summer.lit_minutes, summer.first_lit), (1440, None));
        let winter = sun_hours(date(2022, 12, 21), &house, None, 5).unwrap();
        assert_eq!((winter.lit_minutes, winter.last_lit), (0, None));
    }

    #[test]
    fn monthly_shape_at_trondheim() {
        let house = HouseModel::<f64>::trondheim();
        let months = monthly_sun_hours(2022, &house, None).unwrap();
        assert_eq!(months.len(), 12);
        let lit: Vec<u32> = months.iter().map(|m| m.lit_minutes).collect();
        assert!(lit[..6].windows(2).all(|w| w[0] < w[1]), "{lit:?}");
        assert!(lit[5..].windows(2).all(|w| w[0] > w[1]), "{lit:?}");
        let masked = monthly_sun_hours(2022, &house, Some(&HorizonMask::flat(5.0).unwrap())).unwrap();
        for (m, u) in masked.iter().zip(&months) {
            assert!(m.lit_minutes <= u.lit_minutes);
        }
        assert_eq!(monthly_sun_hours(2024, &house, None).unwrap()[1].date.day, 29);
    }

    #[test]
    fn mask_parsing() {
        let text: String = (0..360).map(|a| format!("{a},{}\n", if a < 180 { 10.0 } else { 0.0 })).collect();
        let m = HorizonMask::<f64>::parse(&text).unwrap();
        assert_eq!(m.elevation_at(90.5), 10.0);
        assert_eq!(m.elevation_at(359.99), 0.0);
        assert!(HorizonMask::<f64>::parse("0,1\n").is_err());
        assert!(HorizonMask::<f64>::flat(91.0).is_err());
    }
}
