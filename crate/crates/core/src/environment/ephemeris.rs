//! Low-precision analytic Sun and Moon positions (mean equator and equinox
//! of J2000), accurate to roughly an arcminute over a few decades.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::frames::Epoch;

const ARCSEC: f64 = std::f64::consts::PI / (180.0 * 3600.0);

pub trait Ephemeris: Send + Sync {
    /// Geocentric Sun position, ECI, m.
    fn sun_position(&self, epoch: Epoch) -> Vector3<f64>;
    /// Geocentric Moon position, ECI, m.
    fn moon_position(&self, epoch: Epoch) -> Vector3<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticEphemeris {
    /// Obliquity of the ecliptic, rad.
    pub obliquity: f64,
}

impl Default for AnalyticEphemeris {
    fn default() -> Self {
        Self {
            obliquity: 23.439_291_11f64.to_radians(),
        }
    }
}

impl AnalyticEphemeris {
    fn ecliptic_to_equatorial(&self, lon: f64, lat: f64, r: f64) -> Vector3<f64> {
        let (sl, cl) = lon.sin_cos();
        let (sb, cb) = lat.sin_cos();
        let ecl = Vector3::new(r * cl * cb, r * sl * cb, r * sb);
        let (se, ce) = self.obliquity.sin_cos();
        Vector3::new(ecl.x, ce * ecl.y - se * ecl.z, se * ecl.y + ce * ecl.z)
    }

    /// Ecliptic longitude, latitude (rad) and distance (m) of the Sun.
    pub fn sun_ecliptic(&self, epoch: Epoch) -> (f64, f64, f64) {
        let t = epoch.julian_centuries();
        let m = (357.5256 + 35_999.049 * t).to_radians();
        let lon = (282.94f64).to_radians() + m + (6892.0 * m.sin() + 72.0 * (2.0 * m).sin()) * ARCSEC;
        let r = (149.619 - 2.499 * m.cos() - 0.021 * (2.0 * m).cos()) * 1.0e9;
        (lon, 0.0, r)
    }

    /// Ecliptic longitude, latitude (rad) and distance (m) of the Moon.
    pub fn moon_ecliptic(&self, epoch: Epoch) -> (f64, f64, f64) {
        let t = epoch.julian_centuries();
        let deg = |d: f64| d.to_radians();
        let l0 = deg(218.316_17 + 481_267.880_88 * t - 1.3972 * t);
        let l = deg(134.962_92 + 477_198.867_53 * t);
        let lp = deg(357.525_43 + 35_999.049_44 * t);
        let f = deg(93.272_83 + 483_202.018_73 * t);
        let d = deg(297.850_27 + 445_267.111_35 * t);

        let dlon = 22_640.0 * l.sin() + 769.0 * (2.0 * l).sin() - 4_586.0 * (l - 2.0 * d).sin()
            + 2_370.0 * (2.0 * d).sin()
            - 668.0 * lp.sin()
            - 412.0 * (2.0 * f).sin()
            - 212.0 * (2.0 * l - 2.0 * d).sin()
            - 206.0 * (l + lp - 2.0 * d).sin()
            + 192.0 * (l + 2.0 * d).sin()
            - 165.0 * (lp - 2.0 * d).sin()
            + 148.0 * (l - lp).sin()
            - 125.0 * d.sin()
            - 110.0 * (l + lp).sin()
            - 55.0 * (2.0 * f - 2.0 * d).sin();
        let lon = l0 + dlon * ARCSEC;

        let arg = f + (lon - l0) + (412.0 * (2.0 * f).sin() + 541.0 * lp.sin()) * ARCSEC;
        let lat = (18_520.0 * arg.sin() - 526.0 * (f - 2.0 * d).sin() + 44.0 * (l + f - 2.0 * d).sin()
            - 31.0 * (-l + f - 2.0 * d).sin()
            - 25.0 * (-2.0 * l + f).sin()
            - 23.0 * (lp + f - 2.0 * d).sin()
            + 21.0 * (-l + f).sin()
            + 11.0 * (-lp + f - 2.0 * d).sin())
            * ARCSEC;

        let r = (385_000.0
            - 20_905.0 * l.cos()
            - 3_699.0 * (2.0 * d - l).cos()
            - 2_956.0 * (2.0 * d).cos()
            - 570.0 * (2.0 * l).cos()
            + 246.0 * (2.0 * l - 2.0 * d).cos()
            - 205.0 * (lp - 2.0 * d).cos()
            - 171.0 * (l + 2.0 * d).cos()
            - 152.0 * (l + lp - 2.0 * d).cos())
            * 1.0e3;
        (lon, lat, r)
    }
}

impl Ephemeris for AnalyticEphemeris {
    fn sun_position(&self, epoch: Epoch) -> Vector3<f64> {
        let (lon, lat, r) = self.sun_ecliptic(epoch);
        self.ecliptic_to_equatorial(lon, lat, r)
    }

    fn moon_position(&self, epoch: Epoch) -> Vector3<f64> {
        let (lon, lat, r) = self.moon_ecliptic(epoch);
        self.ecliptic_to_equatorial(lon, lat, r)
    }
}

/// Ephemeris returning the positions at one fixed epoch, for frozen-environment runs.
#[derive(Debug, Clone)]
pub struct FrozenEphemeris {
    pub sun: Vector3<f64>,
    pub moon: Vector3<f64>,
}

impl FrozenEphemeris {
    pub fn at(source: &dyn Ephemeris, epoch: Epoch) -> Self {
        Self {
            sun: source.sun_position(epoch),
            moon: source.moon_position(epoch),
        }
    }
}

impl Ephemeris for FrozenEphemeris {
    fn sun_position(&self, _epoch: Epoch) -> Vector3<f64> {
        self.sun
    }

    fn moon_position(&self, _epoch: Epoch) -> Vector3<f64> {
        self.moon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{AU, SECONDS_PER_DAY};

    #[test]
    fn sun_distance_and_latitude_over_a_year() {
        let eph = AnalyticEphemeris::default();
        let (se, ce) = eph.obliquity.sin_cos();
        let pole = Vector3::new(0.0, -se, ce);
        for k in 0..=366 * 4 {
            let e = Epoch(k as f64 * 0.25 * SECONDS_PER_DAY + 1.0e8);
            let s = eph.sun_position(e);
            let d = s.norm() / AU;
            assert!((0.98..=1.02).contains(&d), "d = {d}");
            let beta = (s.dot(&pole) / s.norm()).asin().to_degrees();
            assert!(beta.abs() < 0.1);
        }
    }

    #[test]
    fn moon_distance_band() {
        let eph = AnalyticEphemeris::default();
        for k in 0..2000 {
            let e = Epoch(k as f64 * 3.0 * 3600.0);
            let r = eph.moon_position(e).norm();
            assert!((3.5e8..=4.1e8).contains(&r), "r = {r}");
        }
    }

    #[test]
    fn moon_crosses_plus_x_every_sidereal_month() {
        let eph = AnalyticEphemeris::default();
        // upward crossings of the ECI x-z half-plane (y: - → +, x > 0), bisected
        let f = |t: f64| eph.moon_position(Epoch(t));
        let step = 3600.0;
        let mut crossings = Vec::new();
        let mut t = 0.0;
        let mut prev = f(t);
        while crossings.len() < 4 {
            let next = f(t + step);
            if prev.y < 0.0 && next.y >= 0.0 && next.x > 0.0 {
                let (mut lo, mut hi) = (t, t + step);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid).y < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                crossings.push(0.5 * (lo + hi));
            }
            prev = next;
            t += step;
        }
        for w in crossings.windows(2) {
            let days = (w[1] - w[0]) / SECONDS_PER_DAY;
            assert!((days - 27.3).abs() < 0.5, "period {days} d");
        }
    }

    #[test]
    fn positions_are_continuous() {
        let eph = AnalyticEphemeris::default();
        let a = eph.moon_position(Epoch(1.0e7));
        let b = eph.moon_position(Epoch(1.0e7 + 1e-3));
        // Moon moves ~1 km/s
        assert!((a - b).norm() < 5.0);
    }
}
