use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::{R_EARTH_MEAN, SOLAR_IRRADIANCE};
use crate::error::{Error, Result};

/// Zonal albedo and emissivity coefficients, evaluated with unnormalized P1, P2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlbedoCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
}

impl Default for AlbedoCoefficients {
    fn default() -> Self {
        Self {
            a0: 0.34,
            a1: 0.0,
            a2: 0.29,
            e0: 0.68,
            e1: 0.0,
            e2: -0.18,
        }
    }
}

fn zonal(c0: f64, c1: f64, c2: f64, x: f64) -> f64 {
    c0 + c1 * x + c2 * 0.5 * (3.0 * x * x - 1.0)
}

/// Extremes over x = sin φ ∈ [−1, 1] of a quadratic zonal series.
fn zonal_range(c0: f64, c1: f64, c2: f64) -> (f64, f64) {
    let mut xs = vec![-1.0, 1.0];
    if c2 != 0.0 {
        let v = -c1 / (3.0 * c2);
        if v.abs() < 1.0 {
            xs.push(v);
        }
    }
    xs.iter()
        .map(|&x| zonal(c0, c1, c2, x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)))
}

impl AlbedoCoefficients {
    pub fn albedo(&self, latitude: f64) -> f64 {
        zonal(self.a0, self.a1, self.a2, latitude.sin())
    }

    pub fn emissivity(&self, latitude: f64) -> f64 {
        zonal(self.e0, self.e1, self.e2, latitude.sin())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("albedo", zonal_range(self.a0, self.a1, self.a2)),
            ("emissivity", zonal_range(self.e0, self.e1, self.e2)),
        ] {
            if lo < 0.0 || hi > 1.0 {
                return Err(Error::config(format!(
                    "{name} coefficients leave [0, 1] (range {lo:.4}..{hi:.4})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlbedoElement {
    pub latitude: f64,
    pub longitude: f64,
    pub area: f64,
    /// Outward unit normal; also the unit position of the element center.
    pub normal: Vector3<f64>,
    pub albedo: f64,
    pub emissivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlbedoSettings {
    /// Number of equal-area latitude bands.
    pub bands: usize,
    pub coefficients: AlbedoCoefficients,
    pub solar_irradiance: f64,
    /// Reflectivity parameter of the augmentation factor K = 1 + η_E.
    pub eta_e: f64,
    pub radius: f64,
}

impl Default for AlbedoSettings {
    fn default() -> Self {
        Self {
            bands: 36,
            coefficients: AlbedoCoefficients::default(),
            solar_irradiance: SOLAR_IRRADIANCE,
            eta_e: 0.3,
            radius: R_EARTH_MEAN,
        }
    }
}

/// Discretized Earth surface for the reflected/emitted radiation sum.
///
/// Elements are laid out on the inertial sphere: the zonal coefficients only
/// depend on latitude, so Earth rotation does not change any element.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoGrid {
    pub elements: Vec<AlbedoElement>,
    pub coefficients: AlbedoCoefficients,
    pub solar_irradiance: f64,
    pub eta_e: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementIrradiance {
    /// ν·a·E_s·cos θ_s, W/m².
    pub reflected: f64,
    /// e·M_b, W/m².
    pub emitted: f64,
    pub lit: bool,
    pub cos_alpha: f64,
    pub range: f64,
    /// Unit vector from the element toward the spacecraft.
    pub r_hat: Vector3<f64>,
}

impl AlbedoGrid {
    pub fn new(settings: &AlbedoSettings) -> Result<Self> {
        settings.coefficients.validate()?;
        if settings.bands < 2 {
            return Err(Error::config("albedo grid needs at least two latitude bands"));
        }
        if !(settings.radius > 0.0 && settings.solar_irradiance >= 0.0 && settings.eta_e >= 0.0) {
            return Err(Error::config("invalid albedo grid settings"));
        }
        let n = settings.bands;
        let r2 = settings.radius * settings.radius;
        let mut elements = Vec::new();
        for i in 0..n {
            let z_lo = -1.0 + 2.0 * i as f64 / n as f64;
            let z_hi = -1.0 + 2.0 * (i + 1) as f64 / n as f64;
            let (lat_lo, lat_hi) = (z_lo.asin(), z_hi.asin());
            let lat = (0.5 * (z_lo + z_hi)).asin();
            let n_lon = ((2.0 * PI * lat.cos() / (lat_hi - lat_lo)).round() as usize).max(1);
            let area = 4.0 * PI * r2 / (n as f64 * n_lon as f64);
            let coeffs = &settings.coefficients;
            for k in 0..n_lon {
                let lon = 2.0 * PI * (k as f64 + 0.5) / n_lon as f64;
                let normal = Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin());
                elements.push(AlbedoElement {
                    latitude: lat,
                    longitude: lon,
                    area,
                    normal,
                    albedo: coeffs.albedo(lat),
                    emissivity: coeffs.emissivity(lat),
                });
            }
        }
        Ok(Self {
            elements,
            coefficients: settings.coefficients,
            solar_irradiance: settings.solar_irradiance,
            eta_e: settings.eta_e,
            radius: settings.radius,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    /// Exitance of an ideal black body re-emitting the mean absorbed flux.
    pub fn exitance(&self) -> f64 {
        self.solar_irradiance / 4.0
    }

    pub fn augmentation(&self) -> f64 {
        1.0 + self.eta_e
    }

    /// Irradiance terms of one element for a spacecraft at `r_sc` (ECI, m), with
    /// `sun_hat` the geocentric unit Sun direction.
    pub fn element_irradiance(&self, index: usize, sun_hat: &Vector3<f64>, r_sc: &Vector3<f64>) -> ElementIrradiance {
        let el = &self.elements[index];
        let cos_s = el.normal.dot(sun_hat);
        let lit = cos_s > 0.0;
        let reflected = if lit {
            el.albedo * self.solar_irradiance * cos_s
        } else {
            0.0
        };
        let d = r_sc - el.normal * self.radius;
        let range = d.norm();
        let r_hat = d / range;
        ElementIrradiance {
            reflected,
            emitted: el.emissivity * self.exitance(),
            lit,
            cos_alpha: el.normal.dot(&r_hat),
            range,
            r_hat,
        }
    }
}

pub fn albedo_emissivity(grid: &AlbedoGrid, latitude: f64) -> (f64, f64) {
    (
        grid.coefficients.albedo(latitude),
        grid.coefficients.emissivity(latitude),
    )
}
