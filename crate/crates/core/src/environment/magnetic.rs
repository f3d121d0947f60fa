use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::{B0_DIPOLE, R_EARTH};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipoleField {
    /// Equatorial surface field strength, T.
    pub b0: f64,
    pub radius: f64,
    /// Unit dipole axis in ECI (north magnetic pole direction).
    pub axis: Vector3<f64>,
}

impl Default for DipoleField {
    fn default() -> Self {
        Self {
            b0: B0_DIPOLE,
            radius: R_EARTH,
            axis: Vector3::z(),
        }
    }
}

impl DipoleField {
    /// Dipole axis tilted from the ECI z axis by `tilt` toward the direction at right ascension `ra`.
    pub fn tilted(tilt: f64, ra: f64) -> Self {
        let (st, ct) = tilt.sin_cos();
        Self {
            axis: Vector3::new(st * ra.cos(), st * ra.sin(), ct),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::config("dipole axis must be a unit vector"));
        }
        if !(self.b0 > 0.0 && self.radius > 0.0) {
            return Err(Error::config("dipole strength and radius must be positive"));
        }
        Ok(())
    }

    /// Radial and colatitudinal components `(B_r, B_θ)` and colatitude θ at `r`.
    pub fn spherical_components(&self, r: &Vector3<f64>) -> (f64, f64, f64) {
        let rn = r.norm();
        let scale = self.b0 * (self.radius / rn).powi(3);
        let cos_t = (self.axis.dot(r) / rn).clamp(-1.0, 1.0);
        let theta = cos_t.acos();
        (-2.0 * scale * cos_t, -scale * theta.sin(), theta)
    }
}

/// Dipole field at `r` (ECI, m), ECI components in T.
pub fn magnetic_field(field: &DipoleField, r: &Vector3<f64>) -> Vector3<f64> {
    let rn = r.norm();
    let r_hat = r / rn;
    let scale = field.b0 * (field.radius / rn).powi(3);
    let cos_t = field.axis.dot(&r_hat);
    // B_r r̂ + B_θ θ̂ with θ̂ = (cos θ r̂ − k̂)/sin θ
    (field.axis - r_hat * (3.0 * cos_t)) * scale
}
