//! Spherical-harmonic gravity with fully normalized Stokes coefficients.
//!
//! The acceleration is the gradient of
//! `U = μ/r Σₙ (Re/r)ⁿ Σₘ P̄ₙₘ(sin φ) (C̄ₙₘ cos mλ + S̄ₙₘ sin mλ)`
//! taken in spherical Earth-fixed coordinates. The `n = 0` term is the
//! central field, so the result is the total gravitational acceleration.
//!
//! Legendre functions use the forward-column recursion (diagonal seeds, then
//! a three-term recursion in degree). The longitude derivative needs
//! `P̄ₙₘ / cos φ`, which is produced by the same recursion from divided seeds
//! so the field stays finite at the poles.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::{MU_EARTH, MU_MOON, MU_SUN, R_EARTH};
use crate::error::{Error, Result};
use crate::frames::{EarthRotation, Epoch};

const BUNDLED_JGM3: &str = include_str!("../data/jgm3_deg20.txt");
pub const BUNDLED_MAX_DEGREE: usize = 20;

#[inline]
fn tri(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

/// Normalized associated Legendre functions and their latitude derivatives.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    pub n_max: usize,
    pub m_max: usize,
    p: Vec<f64>,
    dp: Vec<f64>,
    p_over_cos: Vec<f64>,
}

impl LegendreTable {
    /// `P̄ₙₘ`; zero for `m > m_max`.
    pub fn p(&self, n: usize, m: usize) -> f64 {
        if m > n || m > self.m_max || n > self.n_max {
            0.0
        } else {
            self.p[tri(n, m)]
        }
    }

    /// `dP̄ₙₘ/dφ`.
    pub fn dp(&self, n: usize, m: usize) -> f64 {
        if m > n || m > self.m_max || n > self.n_max {
            0.0
        } else {
            self.dp[tri(n, m)]
        }
    }

    /// `P̄ₙₘ / cos φ` for `m ≥ 1` (finite at the poles); zero for `m = 0`.
    pub fn p_over_cos(&self, n: usize, m: usize) -> f64 {
        if m == 0 || m > n || m > self.m_max || n > self.n_max {
            0.0
        } else {
            self.p_over_cos[tri(n, m)]
        }
    }
}

pub fn legendre_normalized(n_max: usize, m_max: usize, sin_phi: f64) -> LegendreTable {
    let m_max = m_max.min(n_max);
    let t = sin_phi.clamp(-1.0, 1.0);
    let u = (1.0 - t * t).max(0.0).sqrt();
    let len = tri(n_max, n_max) + 1;
    let mut p = vec![0.0; len];
    let mut dp = vec![0.0; len];
    let mut q = vec![0.0; len];

    for m in 0..=m_max {
        // diagonal seed
        let d = tri(m, m);
        match m {
            0 => {
                p[d] = 1.0;
                dp[d] = 0.0;
            }
            1 => {
                let k = 3f64.sqrt();
                p[d] = k * u;
                dp[d] = -k * t;
                q[d] = k;
            }
            _ => {
                let k = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
                let prev = tri(m - 1, m - 1);
                p[d] = k * u * p[prev];
                dp[d] = k * (u * dp[prev] - t * p[prev]);
                q[d] = k * u * q[prev];
            }
        }
        if m + 1 > n_max {
            continue;
        }
        let k = ((2 * m + 3) as f64).sqrt();
        let s = tri(m + 1, m);
        p[s] = k * t * p[d];
        dp[s] = k * (u * p[d] + t * dp[d]);
        q[s] = k * t * q[d];
        for n in (m + 2)..=n_max {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((2.0 * nf - 1.0) * (2.0 * nf + 1.0) / ((nf - mf) * (nf + mf))).sqrt();
            let b = ((2.0 * nf + 1.0) * (nf + mf - 1.0) * (nf - mf - 1.0) / ((nf - mf) * (nf + mf) * (2.0 * nf - 3.0)))
                .sqrt();
            let i = tri(n, m);
            let i1 = tri(n - 1, m);
            let i2 = tri(n - 2, m);
            p[i] = a * t * p[i1] - b * p[i2];
            dp[i] = a * (u * p[i1] + t * dp[i1]) - b * dp[i2];
            q[i] = a * t * q[i1] - b * q[i2];
        }
    }

    LegendreTable {
        n_max,
        m_max,
        p,
        dp,
        p_over_cos: q,
    }
}

/// Triangular store of `C̄ₙₘ, S̄ₙₘ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    n_max: usize,
    m_max: usize,
    c: Vec<f64>,
    s: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(n_max: usize, m_max: usize) -> Self {
        let len = tri(n_max, n_max) + 1;
        Self {
            n_max,
            m_max: m_max.min(n_max),
            c: vec![0.0; len],
            s: vec![0.0; len],
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn c(&self, n: usize, m: usize) -> f64 {
        if n > self.n_max || m > n || m > self.m_max {
            0.0
        } else {
            self.c[tri(n, m)]
        }
    }

    pub fn s(&self, n: usize, m: usize) -> f64 {
        if n > self.n_max || m > n || m > self.m_max {
            0.0
        } else {
            self.s[tri(n, m)]
        }
    }

    fn set(&mut self, n: usize, m: usize, c: f64, s: f64) {
        let i = tri(n, m);
        self.c[i] = c;
        self.s[i] = s;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravityModel {
    pub mu: f64,
    pub radius: f64,
    pub rotation: EarthRotation,
    coeffs: Coefficients,
}

impl GravityModel {
    /// Central field only (`n_max = 0`).
    pub fn point_mass(mu: f64, radius: f64) -> Self {
        let mut coeffs = Coefficients::zeros(0, 0);
        coeffs.set(0, 0, 1.0, 0.0);
        Self {
            mu,
            radius,
            rotation: EarthRotation::default(),
            coeffs,
        }
    }

    /// Bundled JGM-3 field truncated at `(n_max, m_max)`, `n_max ≤ 20`.
    pub fn bundled(n_max: usize, m_max: usize) -> Result<Self> {
        if n_max > BUNDLED_MAX_DEGREE {
            return Err(Error::config(format!(
                "bundled gravity field only goes to degree {BUNDLED_MAX_DEGREE}, requested {n_max}"
            )));
        }
        Self::from_coefficient_text(BUNDLED_JGM3, Path::new("<bundled jgm3>"), n_max, m_max)
    }

    pub fn from_file(path: &Path, n_max: usize, m_max: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_coefficient_text(&text, path, n_max, m_max)
    }

    /// Parse `n m C̄ S̄` rows (`#` comments). Rows beyond the truncation are
    /// skipped; duplicate `(n, m)` pairs are rejected.
    pub fn from_coefficient_text(text: &str, origin: &Path, n_max: usize, m_max: usize) -> Result<Self> {
        if m_max > n_max {
            return Err(Error::config("gravity m_max exceeds n_max"));
        }
        let mut coeffs = Coefficients::zeros(n_max, m_max);
        let mut seen = std::collections::HashSet::new();
        let mut has_c00 = false;
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
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(format!("expected `n m C S`, found {} fields", fields.len())));
            }
            let n: usize = fields[0].parse().map_err(|e| err(format!("degree: {e}")))?;
            let m: usize = fields[1].parse().map_err(|e| err(format!("order: {e}")))?;
            let c: f64 = fields[2].parse().map_err(|e| err(format!("C: {e}")))?;
            let s: f64 = fields[3].parse().map_err(|e| err(format!("S: {e}")))?;
            if m > n {
                return Err(err(format!("order {m} exceeds degree {n}")));
            }
            if !c.is_finite() || !s.is_finite() {
                return Err(err("non-finite coefficient".into()));
            }
            if !seen.insert((n, m)) {
                return Err(err(format!("duplicate coefficient ({n}, {m})")));
            }
            if n == 0 {
                if (c - 1.0).abs() > 1e-12 {
                    return Err(err(format!("C00 must be 1, found {c}")));
                }
                has_c00 = true;
            }
            if n <= n_max && m <= m_max {
                coeffs.set(n, m, c, s);
            }
        }
        if !has_c00 {
            coeffs.set(0, 0, 1.0, 0.0);
        }
        Ok(Self {
            mu: MU_EARTH,
            radius: R_EARTH,
            rotation: EarthRotation::default(),
            coeffs,
        })
    }

    /// Build from explicit `(n, m, C̄, S̄)` entries.
    pub fn from_entries(
        mu: f64,
        radius: f64,
        n_max: usize,
        m_max: usize,
        entries: &[(usize, usize, f64, f64)],
    ) -> Result<Self> {
        let mut model = Self::point_mass(mu, radius);
        let mut coeffs = Coefficients::zeros(n_max, m_max);
        coeffs.set(0, 0, 1.0, 0.0);
        for &(n, m, c, s) in entries {
            if n == 0 {
                continue;
            }
            if m > n || n > n_max || m > coeffs.m_max {
                return Err(Error::config(format!("coefficient ({n}, {m}) outside truncation")));
            }
            coeffs.set(n, m, c, s);
        }
        model.coeffs = coeffs;
        Ok(model)
    }

    pub fn with_rotation(mut self, rotation: EarthRotation) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn with_constants(mut self, mu: f64, radius: f64) -> Self {
        self.mu = mu;
        self.radius = radius;
        self
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn n_max(&self) -> usize {
        self.coeffs.n_max
    }

    pub fn m_max(&self) -> usize {
        self.coeffs.m_max
    }

    pub fn c(&self, n: usize, m: usize) -> f64 {
        self.coeffs.c(n, m)
    }

    pub fn s(&self, n: usize, m: usize) -> f64 {
        self.coeffs.s(n, m)
    }

    /// Gravitational potential (positive convention, `μ/r` at `n = 0`).
    pub fn potential(&self, r_eci: &Vector3<f64>, epoch: Epoch) -> f64 {
        let fixed = self.rotation.eci_to_fixed(epoch) * r_eci;
        field_potential(self.mu, self.radius, &self.coeffs, &fixed)
    }
}

fn spherical(fixed: &Vector3<f64>) -> (f64, f64, f64) {
    let r = fixed.norm();
    let sin_phi = fixed.z / r;
    let lambda = fixed.y.atan2(fixed.x);
    (r, sin_phi, lambda)
}

fn field_potential(mu: f64, re: f64, coeffs: &Coefficients, fixed: &Vector3<f64>) -> f64 {
    let (r, sin_phi, lambda) = spherical(fixed);
    let table = legendre_normalized(coeffs.n_max, coeffs.m_max, sin_phi);
    let ratio = re / r;
    let mut sum = 0.0;
    let mut rn = 1.0;
    for n in 0..=coeffs.n_max {
        let mut inner = 0.0;
        for m in 0..=n.min(coeffs.m_max) {
            let (sm, cm) = (m as f64 * lambda).sin_cos();
            inner += table.p(n, m) * (coeffs.c(n, m) * cm + coeffs.s(n, m) * sm);
        }
        sum += rn * inner;
        rn *= ratio;
    }
    mu / r * sum
}

/// Gradient of the harmonic series in Earth-fixed components.
fn field_accel(mu: f64, re: f64, coeffs: &Coefficients, fixed: &Vector3<f64>) -> Vector3<f64> {
    let (r, sin_phi, lambda) = spherical(fixed);
    let table = legendre_normalized(coeffs.n_max, coeffs.m_max, sin_phi);
    let ratio = re / r;

    let mut d_r = 0.0;
    let mut d_phi = 0.0;
    let mut d_lambda = 0.0;
    let mut rn = 1.0;
    for n in 0..=coeffs.n_max {
        let mut sr = 0.0;
        let mut sp = 0.0;
        let mut sl = 0.0;
        for m in 0..=n.min(coeffs.m_max) {
            let (sm, cm) = (m as f64 * lambda).sin_cos();
            let c = coeffs.c(n, m);
            let s = coeffs.s(n, m);
            let cs = c * cm + s * sm;
            sr += table.p(n, m) * cs;
            sp += table.dp(n, m) * cs;
            if m > 0 {
                sl += m as f64 * table.p_over_cos(n, m) * (s * cm - c * sm);
            }
        }
        d_r -= (n as f64 + 1.0) * rn * sr;
        d_phi += rn * sp;
        d_lambda += rn * sl;
        rn *= ratio;
    }
    let scale = mu / (r * r);
    let a_r = scale * d_r;
    let a_phi = scale * d_phi;
    let a_lambda = scale * d_lambda;

    let cos_phi = (1.0 - sin_phi * sin_phi).max(0.0).sqrt();
    let (sl, cl) = lambda.sin_cos();
    let r_hat = Vector3::new(cos_phi * cl, cos_phi * sl, sin_phi);
    let phi_hat = Vector3::new(-sin_phi * cl, -sin_phi * sl, cos_phi);
    let lambda_hat = Vector3::new(-sl, cl, 0.0);
    a_r * r_hat + a_phi * phi_hat + a_lambda * lambda_hat
}

/// Total gravitational acceleration in ECI, m/s².
pub fn gravity_accel(model: &GravityModel, r_eci: &Vector3<f64>, epoch: Epoch) -> Result<Vector3<f64>> {
    let radius = r_eci.norm();
    if !(radius > model.radius) {
        return Err(Error::BelowSurface {
            radius,
            limit: model.radius,
        });
    }
    let rot = model.rotation.eci_to_fixed(epoch);
    let fixed = rot * r_eci;
    Ok(rot.transpose() * field_accel(model.mu, model.radius, &model.coeffs, &fixed))
}

/// Degree-2 solid Earth tide raised by the Sun and Moon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TideCorrection {
    /// Nominal degree-2 Love number.
    pub k2: f64,
    pub mu_sun: f64,
    pub mu_moon: f64,
}

impl Default for TideCorrection {
    fn default() -> Self {
        Self {
            k2: 0.3,
            mu_sun: MU_SUN,
            mu_moon: MU_MOON,
        }
    }
}

/// `(ΔC̄₂ₘ, ΔS̄₂ₘ)` for `m = 0, 1, 2`.
pub fn solid_tide_deltas(
    model: &GravityModel,
    tide: &TideCorrection,
    sun_eci: &Vector3<f64>,
    moon_eci: &Vector3<f64>,
    epoch: Epoch,
) -> [(f64, f64); 3] {
    let rot = model.rotation.eci_to_fixed(epoch);
    let mut out = [(0.0, 0.0); 3];
    for (body, mu_body) in [(sun_eci, tide.mu_sun), (moon_eci, tide.mu_moon)] {
        let fixed = rot * body;
        let (r, sin_phi, lambda) = spherical(&fixed);
        let table = legendre_normalized(2, 2, sin_phi);
        let factor = tide.k2 / 5.0 * (mu_body / model.mu) * (model.radius / r).powi(3);
        for (m, slot) in out.iter_mut().enumerate() {
            let (sm, cm) = (m as f64 * lambda).sin_cos();
            slot.0 += factor * table.p(2, m) * cm;
            slot.1 += factor * table.p(2, m) * sm;
        }
    }
    out
}

/// Corrected copy of `model`; always derived from the unperturbed input.
pub fn apply_solid_tide(
    model: &GravityModel,
    tide: &TideCorrection,
    sun_eci: &Vector3<f64>,
    moon_eci: &Vector3<f64>,
    epoch: Epoch,
) -> GravityModel {
    let deltas = solid_tide_deltas(model, tide, sun_eci, moon_eci, epoch);
    let mut out = model.clone();
    if out.coeffs.n_max < 2 || out.coeffs.m_max < 2 {
        let mut grown = Coefficients::zeros(out.coeffs.n_max.max(2), 2.max(out.coeffs.m_max));
        for n in 0..=out.coeffs.n_max {
            for m in 0..=n.min(out.coeffs.m_max) {
                grown.set(n, m, out.coeffs.c(n, m), out.coeffs.s(n, m));
            }
        }
        out.coeffs = grown;
    }
    for (m, (dc, ds)) in deltas.iter().enumerate() {
        let c = out.coeffs.c(2, m) + dc;
        let s = out.coeffs.s(2, m) + ds;
        out.coeffs.set(2, m, c, s);
    }
    out
}

/// Acceleration produced by the tidal coefficient changes alone.
pub fn solid_tide_accel(
    model: &GravityModel,
    tide: &TideCorrection,
    sun_eci: &Vector3<f64>,
    moon_eci: &Vector3<f64>,
    r_eci: &Vector3<f64>,
    epoch: Epoch,
) -> Vector3<f64> {
    let deltas = solid_tide_deltas(model, tide, sun_eci, moon_eci, epoch);
    let mut delta = Coefficients::zeros(2, 2);
    for (m, (dc, ds)) in deltas.iter().enumerate() {
        delta.set(2, m, *dc, *ds);
    }
    let rot = model.rotation.eci_to_fixed(epoch);
    let fixed = rot * r_eci;
    rot.transpose() * field_accel(model.mu, model.radius, &delta, &fixed)
}
