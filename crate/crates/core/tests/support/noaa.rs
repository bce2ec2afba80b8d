//! Independent sun position after the NOAA solar calculator spreadsheet
//! (Meeus low-accuracy series, equation of time, no refraction). Shares no code
//! with the crate under test.

#![allow(dead_code)]

/// Geometric (altitude, azimuth) in degrees; azimuth clockwise from north.
pub fn sun_position(year: i32, month: u32, day: u32, minutes_ut: f64, latitude: f64, longitude: f64) -> (f64, f64) {
    let jd = julian_day(year, month, day) + minutes_ut / 1440.0;
    let jc = (jd - 2_451_545.0) / 36_525.0;

    let l0 = (280.46646 + jc * (36_000.76983 + jc * 0.000_303_2)).rem_euclid(360.0);
    let m = 357.52911 + jc * (35_999.05029 - 0.000_153_7 * jc);
    let e = 0.016_708_634 - jc * (0.000_042_037 + 0.000_000_126_7 * jc);
    let mr = m.to_radians();
    let c = mr.sin() * (1.914_602 - jc * (0.004_817 + 0.000_014 * jc))
        + (2.0 * mr).sin() * (0.019_993 - 0.000_101 * jc)
        + (3.0 * mr).sin() * 0.000_289;
    let true_long = l0 + c;
    let omega = (125.04 - 1934.136 * jc).to_radians();
    let app_long = true_long - 0.005_69 - 0.004_78 * omega.sin();
    let mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.000_59 - jc * 0.001_813))) / 60.0) / 60.0;
    let obliq = (mean_obliq + 0.002_56 * omega.cos()).to_radians();
    let decl = (obliq.sin() * app_long.to_radians().sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let l0r = l0.to_radians();
    let eot = 4.0
        * (y * (2.0 * l0r).sin() - 2.0 * e * mr.sin() + 4.0 * e * y * mr.sin() * (2.0 * l0r).cos()
            - 0.5 * y * y * (4.0 * l0r).sin()
            - 1.25 * e * e * (2.0 * mr).sin())
        .to_degrees();

    let true_solar = (minutes_ut + eot + 4.0 * longitude).rem_euclid(1440.0);
    let ha = if true_solar / 4.0 < 0.0 { true_solar / 4.0 + 180.0 } else { true_solar / 4.0 - 180.0 };
    let (lat, har) = (latitude.to_radians(), ha.to_radians());
    let cos_zen = (lat.sin() * decl.sin() + lat.cos() * decl.cos() * har.cos()).clamp(-1.0, 1.0);
    let zen = cos_zen.acos();
    let altitude = 90.0 - zen.to_degrees();
    let cos_az = ((lat.sin() * zen.cos() - decl.sin()) / (lat.cos() * zen.sin())).clamp(-1.0, 1.0);
    let a = cos_az.acos().to_degrees();
    let azimuth = if ha > 0.0 { (a + 180.0).rem_euclid(360.0) } else { (540.0 - a).rem_euclid(360.0) };
    (altitude, azimuth)
}

/// Julian day number at 0h UT (Meeus, Gregorian calendar).
fn julian_day(year: i32, month: u32, day: u32) -> f64 {
    let (mut y, mut m) = (year as f64, month as f64);
    if m <= 2.0 {
        y -= 1.0;
        m += 12.0;
    }
    let a = (y / 100.0).floor();
    let b = 2.0 - a + (a / 4.0).floor();
    (365.25 * (y + 4716.0)).floor() + (30.6001 * (m + 1.0)).floor() + day as f64 + b - 1524.5
}

/// Smallest absolute difference between two bearings in degrees.
pub fn bearing_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
