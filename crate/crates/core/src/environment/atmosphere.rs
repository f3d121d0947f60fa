use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::R_EARTH;
use crate::error::{Error, Result};
use crate::frames::{EarthRotation, Epoch};

const BUNDLED_TABLE: &str = include_str!("../../data/atmosphere_exponential.txt");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub base_altitude: f64,
    pub base_density: f64,
    pub scale_height: f64,
}

/// Piecewise-exponential density table over spherical altitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtmosphereModel {
    layers: Vec<Layer>,
    pub corotating: bool,
    pub earth_radius: f64,
    pub rotation: EarthRotation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySample {
    /// kg/m³
    pub rho: f64,
    /// Atmosphere velocity in ECI, m/s.
    pub v_atm: Vector3<f64>,
    /// Set when the altitude is above the table ceiling (`rho` is then 0).
    pub above_table: bool,
}

impl AtmosphereModel {
    pub fn bundled() -> Self {
        Self::from_table_text(BUNDLED_TABLE, Path::new("<bundled atmosphere>"))
            .expect("bundled atmosphere table is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_table_text(&text, path)
    }

    /// Parse `base_alt_m base_density_kgm3 scale_height_m` rows.
    pub fn from_table_text(text: &str, origin: &Path) -> Result<Self> {
        let mut layers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg,
            };
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().map_err(|e| err(e.to_string())))
                .collect::<Result<_>>()?;
            if vals.len() != 3 {
                return Err(err(format!("expected 3 columns, found {}", vals.len())));
            }
            layers.push(Layer {
                base_altitude: vals[0],
                base_density: vals[1],
                scale_height: vals[2],
            });
        }
        Self::new(layers)
    }

    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::config("atmosphere table needs at least two rows"));
        }
        for l in &layers {
            if !(l.base_density > 0.0) || !(l.scale_height > 0.0) || !l.base_altitude.is_finite() {
                return Err(Error::config(format!("invalid atmosphere layer {l:?}")));
            }
        }
        for w in layers.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            if hi.base_altitude <= lo.base_altitude {
                return Err(Error::config("atmosphere layer altitudes must increase"));
            }
            let top = lo.base_density * (-(hi.base_altitude - lo.base_altitude) / lo.scale_height).exp();
            if hi.base_density > top * (1.0 + 1e-9) {
                return Err(Error::config(format!(
                    "density increases across the boundary at {} m",
                    hi.base_altitude
                )));
            }
        }
        Ok(Self {
            layers,
            corotating: true,
            earth_radius: R_EARTH,
            rotation: EarthRotation::default(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn ceiling(&self) -> f64 {
        self.layers.last().map(|l| l.base_altitude).unwrap_or(0.0)
    }

    pub fn density_at_altitude(&self, altitude: f64) -> Result<(f64, bool)> {
        let floor = self.layers[0].base_altitude;
        if altitude < floor {
            return Err(Error::AltitudeOutOfRange { altitude, floor });
        }
        if altitude > self.ceiling() {
            return Ok((0.0, true));
        }
        // last layer whose base is at or below the altitude
        let idx = self
            .layers
            .partition_point(|l| l.base_altitude <= altitude)
            .saturating_sub(1);
        let l = &self.layers[idx];
        Ok((
            l.base_density * (-(altitude - l.base_altitude) / l.scale_height).exp(),
            false,
        ))
    }
}

pub fn density(model: &AtmosphereModel, r_eci: &Vector3<f64>, _epoch: Epoch) -> Result<DensitySample> {
    let altitude = r_eci.norm() - model.earth_radius;
    let (rho, above_table) = model.density_at_altitude(altitude)?;
    let v_atm = if model.corotating {
        model.rotation.angular_velocity().cross(r_eci)
    } else {
        Vector3::zeros()
    };
    Ok(DensitySample {
        rho,
        v_atm,
        above_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn base_anchor_and_mid_layer() {
        let m = AtmosphereModel::bundled();
        let base = m.layers().iter().find(|l| l.base_altitude == 500_000.0).unwrap();
        let (rho, flag) = m.density_at_altitude(500_000.0).unwrap();
        assert_eq!(rho, base.base_density);
        assert!(!flag);
        // hand evaluation: 550 km is 50 km into the 500 km layer
        let (rho, _) = m.density_at_altitude(550_000.0).unwrap();
        let hand = 6.967e-13 * (-50_000.0f64 / base.scale_height).exp();
        assert_relative_eq!(rho, hand, max_relative = 1e-14);
        assert!(rho < 6.967e-13 && rho > 1.454e-13);
    }

    #[test]
    fn ceiling_and_floor() {
        let m = AtmosphereModel::bundled();
        assert_eq!(m.density_at_altitude(1.2e6).unwrap(), (0.0, true));
        assert!(matches!(
            m.density_at_altitude(-10.0),
            Err(Error::AltitudeOutOfRange { .. })
        ));
    }

    #[test]
    fn monotone_and_continuous() {
        let m = AtmosphereModel::bundled();
        let mut prev = f64::INFINITY;
        let mut h = 0.0;
        while h <= 1.0e6 {
            let (rho, _) = m.density_at_altitude(h).unwrap();
            assert!(rho > 0.0 && rho <= prev * (1.0 + 1e-9), "h = {h}");
            prev = rho;
            h += 250.0;
        }
        for l in &m.layers()[1..] {
            let below = m.density_at_altitude(l.base_altitude - 1e-6).unwrap().0;
            assert_relative_eq!(below, l.base_density, max_relative = 1e-6);
        }
    }

    #[test]
    fn corotation_toggle() {
        let mut m = AtmosphereModel::bundled();
        let r = Vector3::new(6.978e6, 0.0, 0.0);
        let s = density(&m, &r, Epoch::J2000).unwrap();
        assert_relative_eq!(s.v_atm, Vector3::new(0.0, m.rotation.rate * 6.978e6, 0.0));
        m.corotating = false;
        assert_eq!(density(&m, &r, Epoch::J2000).unwrap().v_atm, Vector3::zeros());
    }

    #[test]
    fn rejects_increasing_density() {
        let layers = vec![
            Layer {
                base_altitude: 0.0,
                base_density: 1.0,
                scale_height: 1000.0,
            },
            Layer {
                base_altitude: 1000.0,
                base_density: 0.9,
                scale_height: 1000.0,
            },
        ];
        assert!(AtmosphereModel::new(layers).is_err());
    }
}
