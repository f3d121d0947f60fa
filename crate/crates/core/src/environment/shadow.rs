use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::{R_EARTH, R_SUN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowGeometry {
    pub body_radius: f64,
    pub sun_radius: f64,
}

impl Default for ShadowGeometry {
    fn default() -> Self {
        Self {
            body_radius: R_EARTH,
            sun_radius: R_SUN,
        }
    }
}

/// Solid angle of a cap with angular radius `x`, computed without cancellation.
fn cap(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    4.0 * PI * s * s
}

fn clamped_acos(x: f64) -> f64 {
    x.clamp(-1.0, 1.0).acos()
}

/// Solid angle of the intersection of two caps with radii `a`, `b` whose
/// centers are `c` apart, for |a − b| < c < a + b.
fn lens(a: f64, b: f64, c: f64) -> f64 {
    let (ca, sa) = (a.cos(), a.sin());
    let (cb, sb) = (b.cos(), b.sin());
    let (cc, sc) = (c.cos(), c.sin());
    let t1 = clamped_acos((cc - ca * cb) / (sa * sb));
    let t2 = clamped_acos((cb - cc * ca) / (sc * sa));
    let t3 = clamped_acos((ca - cc * cb) / (sc * sb));
    2.0 * (PI - t1 - ca * t2 - cb * t3)
}

/// Visible fraction of the solar disk seen from `r_sc`, given the geocentric
/// Sun position `r_sun` (both ECI, m). 1 in sunlight, 0 in umbra.
pub fn shadow_factor(geom: &ShadowGeometry, r_sc: &Vector3<f64>, r_sun: &Vector3<f64>) -> f64 {
    let to_sun = r_sun - r_sc;
    let d_sun = to_sun.norm();
    let d_body = r_sc.norm();
    if d_body <= geom.body_radius {
        return 0.0;
    }
    // apparent radii of the Sun (a) and the occulting body (b), separation c
    let a = (geom.sun_radius / d_sun).asin();
    let b = (geom.body_radius / d_body).asin();
    let to_body = -r_sc;
    let c = to_sun.cross(&to_body).norm().atan2(to_sun.dot(&to_body));

    if c >= a + b {
        1.0
    } else if c <= b - a {
        0.0
    } else if c <= a - b {
        1.0 - cap(b) / cap(a)
    } else {
        (1.0 - lens(a, b, c) / cap(a)).clamp(0.0, 1.0)
    }
}
