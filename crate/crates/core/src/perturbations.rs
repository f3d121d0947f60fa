//! Translational accelerations and attitude torques, evaluated per contributor.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{AU, C_LIGHT, P_SUN};
use crate::environment::{
    density, magnetic_field, shadow_factor, AlbedoGrid, AnalyticEphemeris, AtmosphereModel, DipoleField, Ephemeris,
    ShadowGeometry,
};
use crate::error::{Error, Result};
use crate::facet::{total_radiation_wrench, AlbedoPressure, FacetedSpacecraft, RadiationFieldSample};
use crate::frames::{Epoch, Quaternion};
use crate::geopotential::{gravity_accel, solid_tide_accel, GravityModel, TideCorrection};
use crate::propagator::StateVector13;

pub const ACCEL_NAMES: [&str; 8] = [
    "geopotential",
    "drag",
    "srp",
    "third_body_sun",
    "third_body_moon",
    "solid_tide",
    "relativity",
    "albedo",
];

pub const TORQUE_NAMES: [&str; 6] = ["gravity_gradient", "drag", "srp", "albedo", "facet_radiation", "bias"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccelToggles {
    pub geopotential: bool,
    pub drag: bool,
    pub srp: bool,
    pub third_body_sun: bool,
    pub third_body_moon: bool,
    pub solid_tide: bool,
    pub relativity: bool,
    pub albedo: bool,
}

impl Default for AccelToggles {
    fn default() -> Self {
        Self::all(true)
    }
}

impl AccelToggles {
    pub fn all(on: bool) -> Self {
        Self::from_array([on; 8])
    }

    pub fn only(index: usize) -> Self {
        let mut flags = [false; 8];
        flags[index] = true;
        Self::from_array(flags)
    }

    pub fn as_array(&self) -> [bool; 8] {
        [
            self.geopotential,
            self.drag,
            self.srp,
            self.third_body_sun,
            self.third_body_moon,
            self.solid_tide,
            self.relativity,
            self.albedo,
        ]
    }

    pub fn from_array(f: [bool; 8]) -> Self {
        Self {
            geopotential: f[0],
            drag: f[1],
            srp: f[2],
            third_body_sun: f[3],
            third_body_moon: f[4],
            solid_tide: f[5],
            relativity: f[6],
            albedo: f[7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TorqueToggles {
    pub gravity_gradient: bool,
    pub drag: bool,
    pub srp: bool,
    pub albedo: bool,
    pub facet_radiation: bool,
    pub bias: bool,
}

impl Default for TorqueToggles {
    fn default() -> Self {
        Self {
            gravity_gradient: true,
            drag: true,
            srp: true,
            albedo: true,
            facet_radiation: false,
            bias: false,
        }
    }
}

impl TorqueToggles {
    pub fn all(on: bool) -> Self {
        Self::from_array([on; 6])
    }

    pub fn only(index: usize) -> Self {
        let mut flags = [false; 6];
        flags[index] = true;
        Self::from_array(flags)
    }

    pub fn as_array(&self) -> [bool; 6] {
        [
            self.gravity_gradient,
            self.drag,
            self.srp,
            self.albedo,
            self.facet_radiation,
            self.bias,
        ]
    }

    pub fn from_array(f: [bool; 6]) -> Self {
        Self {
            gravity_gradient: f[0],
            drag: f[1],
            srp: f[2],
            albedo: f[3],
            facet_radiation: f[4],
            bias: f[5],
        }
    }
}

/// How radiation accelerations are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiationModel {
    /// Cannonball sphere for SRP, element sum for albedo.
    #[default]
    Lumped,
    /// Per-facet kernels; the albedo element sum sets the effective albedo field.
    Facet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThirdBodyForm {
    #[default]
    Differential,
    /// `−μ r / |s|³`, kept for comparison only.
    Printed,
}

/// Shared, immutable environment models.
#[derive(Clone)]
pub struct Environment {
    pub gravity: GravityModel,
    pub tide: TideCorrection,
    pub atmosphere: AtmosphereModel,
    pub ephemeris: Arc<dyn Ephemeris>,
    pub shadow: ShadowGeometry,
    pub magnetic: DipoleField,
    pub albedo: AlbedoGrid,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("gravity_degree", &self.gravity.n_max())
            .field("albedo_elements", &self.albedo.len())
            .finish_non_exhaustive()
    }
}

impl Environment {
    pub fn new(gravity: GravityModel, albedo: AlbedoGrid) -> Self {
        Self {
            gravity,
            tide: TideCorrection::default(),
            atmosphere: AtmosphereModel::bundled(),
            ephemeris: Arc::new(AnalyticEphemeris::default()),
            shadow: ShadowGeometry::default(),
            magnetic: DipoleField::default(),
            albedo,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationSet {
    pub accel: AccelToggles,
    pub torque: TorqueToggles,
    pub radiation: RadiationModel,
    pub third_body_form: ThirdBodyForm,
    /// Constant disturbance torque, BODY, N·m.
    pub bias_torque: Vector3<f64>,
    /// Sun and Moon held at this epoch when set.
    pub frozen_epoch: Option<Epoch>,
    pub env: Arc<Environment>,
}

impl PerturbationSet {
    pub fn new(env: Arc<Environment>) -> Self {
        Self {
            accel: AccelToggles::default(),
            torque: TorqueToggles::default(),
            radiation: RadiationModel::Lumped,
            third_body_form: ThirdBodyForm::Differential,
            bias_torque: Vector3::zeros(),
            frozen_epoch: None,
            env,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.torque.facet_radiation && (self.torque.srp || self.torque.albedo) {
            return Err(Error::config(
                "facet radiation torque and offset srp/albedo torques cannot both be enabled",
            ));
        }
        if self.torque.facet_radiation && self.radiation != RadiationModel::Facet {
            return Err(Error::config(
                "facet radiation torque requires the facet radiation model",
            ));
        }
        Ok(())
    }

    fn ephemeris_epoch(&self, epoch: Epoch) -> Epoch {
        self.frozen_epoch.unwrap_or(epoch)
    }

    pub fn sun_position(&self, epoch: Epoch) -> Vector3<f64> {
        self.env.ephemeris.sun_position(self.ephemeris_epoch(epoch))
    }

    pub fn moon_position(&self, epoch: Epoch) -> Vector3<f64> {
        self.env.ephemeris.moon_position(self.ephemeris_epoch(epoch))
    }

    pub fn magnetic_field_body(&self, state: &StateVector13) -> Vector3<f64> {
        state.q.rotate_inverse(&magnetic_field(&self.env.magnetic, &state.r))
    }
}

/// Per-contributor accelerations (ECI) and torques (BODY) with their totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelBreakdown {
    pub accel: [Vector3<f64>; 8],
    pub torque: [Vector3<f64>; 6],
    pub total_accel: Vector3<f64>,
    pub total_torque: Vector3<f64>,
    pub shadow: f64,
    /// Altitude was above the atmosphere table.
    pub above_atmosphere: bool,
}

impl AccelBreakdown {
    fn zero() -> Self {
        Self {
            accel: [Vector3::zeros(); 8],
            torque: [Vector3::zeros(); 6],
            total_accel: Vector3::zeros(),
            total_torque: Vector3::zeros(),
            shadow: 1.0,
            above_atmosphere: false,
        }
    }

    /// Totals in fixed contributor order.
    pub fn sum_accel(parts: &[Vector3<f64>]) -> Vector3<f64> {
        let mut total = parts[0];
        for p in &parts[1..] {
            total += p;
        }
        total
    }

    pub fn accel_magnitudes(&self) -> [f64; 8] {
        self.accel.map(|a| a.norm())
    }
}

pub fn drag_accel(
    state: &StateVector13,
    sc: &FacetedSpacecraft,
    atmosphere: &AtmosphereModel,
    epoch: Epoch,
) -> Result<(Vector3<f64>, bool)> {
    let sample = density(atmosphere, &state.r, epoch)?;
    let v_rel = state.v - sample.v_atm;
    let a = v_rel * (-0.5 * sc.drag_coefficient * sc.area_to_mass() * sample.rho * v_rel.norm());
    Ok((a, sample.above_table))
}

/// Scaled solar pressure `η P_⊙ (1 AU / d)²` and the unit vector toward the Sun.
pub fn solar_field(r: &Vector3<f64>, sun: &Vector3<f64>, shadow: &ShadowGeometry) -> (f64, f64, Vector3<f64>) {
    let to_sun = sun - r;
    let d = to_sun.norm();
    let eta = shadow_factor(shadow, r, sun);
    (eta, eta * P_SUN * (AU / d).powi(2), to_sun / d)
}

/// Cannonball solar radiation acceleration (ECI).
pub fn srp_accel_lumped(
    r: &Vector3<f64>,
    sc: &FacetedSpacecraft,
    sun: &Vector3<f64>,
    shadow: &ShadowGeometry,
) -> (Vector3<f64>, f64) {
    let (eta, pressure, e_sun) = solar_field(r, sun, shadow);
    (-e_sun * (pressure * sc.area_to_mass() * (1.0 + sc.reflectivity)), eta)
}

pub fn third_body_accel(r: &Vector3<f64>, s: &Vector3<f64>, mu_body: f64, form: ThirdBodyForm) -> Result<Vector3<f64>> {
    let sn = s.norm();
    let d = s - r;
    let dn = d.norm();
    if sn == 0.0 || dn == 0.0 {
        return Err(Error::ThirdBodySingularity);
    }
    Ok(match form {
        ThirdBodyForm::Differential => (d / dn.powi(3) - s / sn.powi(3)) * mu_body,
        ThirdBodyForm::Printed => -r * (mu_body / sn.powi(3)),
    })
}

pub fn relativity_accel(r: &Vector3<f64>, v: &Vector3<f64>, mu: f64) -> Vector3<f64> {
    let rn = r.norm();
    let e_r = r / rn;
    let v2 = v.norm_squared();
    let c2 = C_LIGHT * C_LIGHT;
    let radial = e_r * (4.0 * mu / (c2 * rn) - v2 / c2);
    let along = if v2 > 0.0 {
        let e_v = v / v2.sqrt();
        e_v * (4.0 * v2 / c2 * e_r.dot(&e_v))
    } else {
        Vector3::zeros()
    };
    (radial + along) * (mu / (rn * rn))
}

/// Earth reflected and emitted radiation acceleration, summed over visible elements.
pub fn albedo_accel(r: &Vector3<f64>, sun: &Vector3<f64>, grid: &AlbedoGrid, area_to_mass: f64) -> Vector3<f64> {
    albedo_accel_terms(r, sun, grid, area_to_mass, |_, _| {})
}

/// As [`albedo_accel`], also returning every element's contribution.
pub fn albedo_accel_elements(
    r: &Vector3<f64>,
    sun: &Vector3<f64>,
    grid: &AlbedoGrid,
    area_to_mass: f64,
) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let mut per = vec![Vector3::zeros(); grid.len()];
    let total = albedo_accel_terms(r, sun, grid, area_to_mass, |i, a| per[i] = a);
    (total, per)
}

fn albedo_accel_terms(
    r: &Vector3<f64>,
    sun: &Vector3<f64>,
    grid: &AlbedoGrid,
    area_to_mass: f64,
    mut record: impl FnMut(usize, Vector3<f64>),
) -> Vector3<f64> {
    let sun_hat = sun.normalize();
    let scale = grid.augmentation() * area_to_mass / (C_LIGHT * std::f64::consts::PI);
    let mut total = Vector3::zeros();
    for (i, el) in grid.elements.iter().enumerate() {
        let irr = grid.element_irradiance(i, &sun_hat, r);
        // element must see the spacecraft above its horizon
        if irr.cos_alpha <= 0.0 {
            continue;
        }
        let flux = irr.reflected + irr.emitted;
        let a = irr.r_hat * (scale * flux * irr.cos_alpha * el.area / (irr.range * irr.range));
        record(i, a);
        total += a;
    }
    total
}

pub fn gravity_gradient_torque(r_body: &Vector3<f64>, inertia: &Matrix3<f64>, mu: f64) -> Vector3<f64> {
    let rn = r_body.norm();
    let r_hat = r_body / rn;
    r_hat.cross(&(inertia * r_hat)) * (3.0 * mu / rn.powi(3))
}

/// Torque of force `m · accel` (accel in ECI) applied at the center of pressure.
pub fn offset_torque(accel_eci: &Vector3<f64>, q: &Quaternion, sc: &FacetedSpacecraft) -> Vector3<f64> {
    sc.cp_offset.cross(&(q.rotate_inverse(accel_eci) * sc.mass))
}

/// Facet-model radiation field: solar pressure from the shadowed Sun, albedo
/// as a single effective source reproducing the element-sum acceleration on the
/// equivalent absorbing sphere.
pub fn facet_field_sample(
    state: &StateVector13,
    sc: &FacetedSpacecraft,
    solar_pressure: f64,
    e_sun: &Vector3<f64>,
    albedo_eci: &Vector3<f64>,
) -> RadiationFieldSample {
    let sun_dir = state.q.rotate_inverse(e_sun);
    let an = albedo_eci.norm();
    let (albedo_dir, albedo_pressure) = if an > 0.0 {
        (
            state.q.rotate_inverse(&(-albedo_eci / an)),
            sc.mass * an / sc.cross_section,
        )
    } else {
        (-sun_dir, 0.0)
    };
    RadiationFieldSample {
        sun_dir,
        solar_pressure,
        albedo_dir,
        albedo_pressure: AlbedoPressure::Uniform(albedo_pressure),
    }
}

/// Per-facet albedo accelerations rotated to ECI; their index-order sum is the
/// albedo entry of the breakdown under the facet model.
pub fn facet_albedo_composite(
    state: &StateVector13,
    sc: &FacetedSpacecraft,
    set: &PerturbationSet,
    epoch: Epoch,
) -> Result<FacetComposite> {
    let sun = set.sun_position(epoch);
    let (_, pressure, e_sun) = solar_field(&state.r, &sun, &set.env.shadow);
    let albedo = albedo_accel(&state.r, &sun, &set.env.albedo, sc.area_to_mass());
    let sample = facet_field_sample(state, sc, pressure, &e_sun, &albedo);
    let w = total_radiation_wrench(sc, &sample);
    let albedo_eci: Vec<Vector3<f64>> = w.albedo_accel.iter().map(|a| state.q.rotate(a)).collect();
    let solar_eci: Vec<Vector3<f64>> = w.solar_accel.iter().map(|a| state.q.rotate(a)).collect();
    Ok(FacetComposite {
        albedo_body: w.albedo_accel,
        solar_body: w.solar_accel,
        albedo_eci,
        solar_eci,
    })
}

#[derive(Debug, Clone)]
pub struct FacetComposite {
    pub albedo_body: Vec<Vector3<f64>>,
    pub solar_body: Vec<Vector3<f64>>,
    pub albedo_eci: Vec<Vector3<f64>>,
    pub solar_eci: Vec<Vector3<f64>>,
}

pub fn index_order_sum(v: &[Vector3<f64>]) -> Vector3<f64> {
    let mut total = Vector3::zeros();
    for a in v {
        total += a;
    }
    total
}

pub fn evaluate_all(
    state: &StateVector13,
    sc: &FacetedSpacecraft,
    set: &PerturbationSet,
    epoch: Epoch,
) -> Result<AccelBreakdown> {
    let env = &*set.env;
    let on = set.accel;
    let tq = set.torque;
    let mut out = AccelBreakdown::zero();
    let r = &state.r;

    if on.geopotential {
        out.accel[0] = gravity_accel(&env.gravity, r, epoch)?;
    }
    if on.drag || tq.drag {
        let (a, above) = drag_accel(state, sc, &env.atmosphere, epoch)?;
        out.above_atmosphere = above;
        if on.drag {
            out.accel[1] = a;
        }
        if tq.drag {
            out.torque[1] = offset_torque(&a, &state.q, sc);
        }
    }

    let radiation_needed = on.srp || on.albedo || tq.srp || tq.albedo || tq.facet_radiation;
    let sun = if radiation_needed || on.third_body_sun || on.solid_tide {
        set.sun_position(epoch)
    } else {
        Vector3::zeros()
    };
    if radiation_needed {
        let (eta, pressure, e_sun) = solar_field(r, &sun, &env.shadow);
        out.shadow = eta;
        let lumped_srp = -e_sun * (pressure * sc.area_to_mass() * (1.0 + sc.reflectivity));
        let needs_albedo =
            on.albedo || tq.albedo || (set.radiation == RadiationModel::Facet && (on.srp || tq.facet_radiation));
        let albedo = if needs_albedo {
            albedo_accel(r, &sun, &env.albedo, sc.area_to_mass())
        } else {
            Vector3::zeros()
        };
        match set.radiation {
            RadiationModel::Lumped => {
                if on.srp {
                    out.accel[2] = lumped_srp;
                }
                if on.albedo {
                    out.accel[7] = albedo;
                }
                if tq.srp {
                    out.torque[2] = offset_torque(&lumped_srp, &state.q, sc);
                }
                if tq.albedo {
                    out.torque[3] = offset_torque(&albedo, &state.q, sc);
                }
            }
            RadiationModel::Facet => {
                let sample = facet_field_sample(state, sc, pressure, &e_sun, &albedo);
                let w = total_radiation_wrench(sc, &sample);
                let solar_eci = state.q.rotate(&index_order_sum(&w.solar_accel));
                let albedo_facets: Vec<Vector3<f64>> = w.albedo_accel.iter().map(|a| state.q.rotate(a)).collect();
                let albedo_eci = index_order_sum(&albedo_facets);
                if on.srp {
                    out.accel[2] = solar_eci;
                }
                if on.albedo {
                    out.accel[7] = albedo_eci;
                }
                if tq.srp {
                    out.torque[2] = offset_torque(&solar_eci, &state.q, sc);
                }
                if tq.albedo {
                    out.torque[3] = offset_torque(&albedo_eci, &state.q, sc);
                }
                if tq.facet_radiation {
                    out.torque[4] = w.torque;
                }
            }
        }
    }

    if on.third_body_sun {
        out.accel[3] = third_body_accel(r, &sun, env.tide.mu_sun, set.third_body_form)?;
    }
    let moon = if on.third_body_moon || on.solid_tide {
        set.moon_position(epoch)
    } else {
        Vector3::zeros()
    };
    if on.third_body_moon {
        out.accel[4] = third_body_accel(r, &moon, env.tide.mu_moon, set.third_body_form)?;
    }
    if on.solid_tide {
        out.accel[5] = solid_tide_accel(&env.gravity, &env.tide, &sun, &moon, r, epoch);
    }
    if on.relativity {
        out.accel[6] = relativity_accel(r, &state.v, env.gravity.mu);
    }

    if tq.gravity_gradient {
        let r_body = state.q.rotate_inverse(r);
        out.torque[0] = gravity_gradient_torque(&r_body, &sc.inertia, env.gravity.mu);
    }
    if tq.bias {
        out.torque[5] = set.bias_torque;
    }

    out.total_accel = AccelBreakdown::sum_accel(&out.accel);
    out.total_torque = AccelBreakdown::sum_accel(&out.torque);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{MU_EARTH, MU_SUN, R_EARTH};
    use crate::environment::AlbedoSettings;
    use crate::facet::build_icosphere;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn env() -> Arc<Environment> {
        Arc::new(Environment::new(
            GravityModel::bundled(8, 8).unwrap(),
            AlbedoGrid::new(&AlbedoSettings::default()).unwrap(),
        ))
    }

    fn sphere() -> FacetedSpacecraft {
        build_icosphere(1.0, 3, 0.3, 50.0).unwrap()
    }

    fn leo_state() -> StateVector13 {
        let r = R_EARTH + 600e3;
        let v = (MU_EARTH / r).sqrt();
        StateVector13 {
            r: Vector3::new(r * 0.6, r * 0.8, 0.0),
            v: Vector3::new(-v * 0.8 * 0.1, v * 0.6 * 0.1, v * 0.99f64.sqrt()),
            q: Quaternion::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0).normalize(), 0.7),
            w: Vector3::new(0.001, -0.002, 0.0005),
        }
    }

    #[test]
    fn drag_hand_evaluation() {
        let sc = sphere();
        let mut atm = AtmosphereModel::bundled();
        atm.corotating = false;
        let mut s = leo_state();
        let (a, _) = drag_accel(&s, &sc, &atm, Epoch::J2000).unwrap();
        let (rho, _) = atm.density_at_altitude(s.r.norm() - R_EARTH).unwrap();
        let hand = 0.5 * 2.2 * (PI / 50.0) * rho * s.v.norm_squared();
        assert_relative_eq!(a.norm(), hand, max_relative = 1e-12);
        assert_relative_eq!(a.normalize(), -s.v.normalize(), epsilon = 1e-14);

        s.v = Vector3::zeros();
        assert_eq!(drag_accel(&s, &sc, &atm, Epoch::J2000).unwrap().0, Vector3::zeros());
        atm.corotating = true;
        s.v = atm.rotation.angular_velocity().cross(&s.r);
        assert_eq!(drag_accel(&s, &sc, &atm, Epoch::J2000).unwrap().0, Vector3::zeros());
    }

    #[test]
    fn drag_reference_magnitude() {
        // ρ=1e−12, C_D=2.2, A/m=π/50, |v_rel|=7500
        use crate::environment::atmosphere::Layer;
        let flat = |h: f64| Layer {
            base_altitude: h,
            base_density: 1e-12,
            scale_height: 1e300,
        };
        let mut atm = AtmosphereModel::new(vec![flat(0.0), flat(2.0e6)]).unwrap();
        atm.corotating = false;
        let s = StateVector13 {
            v: Vector3::new(0.0, 7500.0, 0.0),
            ..leo_state()
        };
        let (a, _) = drag_accel(&s, &sphere(), &atm, Epoch::J2000).unwrap();
        let hand = 0.5 * 2.2 * (PI / 50.0) * 1e-12 * 7500.0f64.powi(2);
        assert_relative_eq!(a.norm(), hand, max_relative = 1e-14);
        assert_relative_eq!(a.normalize(), -Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn lumped_srp_anchors() {
        let mut sc = sphere();
        sc.reflectivity = 0.0;
        let sun = Vector3::new(AU, 0.0, 0.0);
        let shadow = ShadowGeometry::default();
        let (a, eta) = srp_accel_lumped(&Vector3::new(7.0e6, 0.0, 0.0), &sc, &sun, &shadow);
        assert_eq!(eta, 1.0);
        let d = AU - 7.0e6;
        assert_relative_eq!(a.norm(), P_SUN * (AU / d).powi(2) * PI / 50.0, max_relative = 1e-14);
        let (a, eta) = srp_accel_lumped(&Vector3::new(-7.0e6, 0.0, 0.0), &sc, &sun, &shadow);
        assert_eq!((a, eta), (Vector3::zeros(), 0.0));
    }

    #[test]
    fn facet_srp_direction_matches_lumped() {
        let env = env();
        let mut set = PerturbationSet::new(env.clone());
        set.accel = AccelToggles::only(2);
        set.torque = TorqueToggles::all(false);
        let mut sc = build_icosphere(1.0, 4, 0.3, 50.0).unwrap();
        sc.reflectivity = sc.mean_reflectivity();
        let s = leo_state();
        let lumped = evaluate_all(&s, &sc, &set, Epoch(1.0e7)).unwrap().accel[2];
        set.radiation = RadiationModel::Facet;
        let facet = evaluate_all(&s, &sc, &set, Epoch(1.0e7)).unwrap().accel[2];
        assert!(lumped.norm() > 0.0);
        assert!(lumped.angle(&facet).to_degrees() < 0.5);
    }

    #[test]
    fn third_body_anchors() {
        let s = Vector3::new(AU, 0.0, 0.0);
        let f = ThirdBodyForm::Differential;
        assert_eq!(
            third_body_accel(&Vector3::zeros(), &s, MU_SUN, f).unwrap(),
            Vector3::zeros()
        );

        // perpendicular: compression of magnitude μ r / s³
        let r = Vector3::new(0.0, 7.0e6, 0.0);
        let a = third_body_accel(&r, &s, MU_SUN, f).unwrap();
        let expect = MU_SUN * 7.0e6 / AU.powi(3);
        assert!(a.y < 0.0);
        assert_relative_eq!(-a.y, expect, max_relative = 1e-6);

        // along the line: stretch of about 2 μ r / s³
        let r = Vector3::new(7.0e6, 0.0, 0.0);
        let a = third_body_accel(&r, &s, MU_SUN, f).unwrap();
        assert_relative_eq!(a.x, 2.0 * expect, max_relative = 1e-4);

        assert!(matches!(
            third_body_accel(&s, &s, MU_SUN, f),
            Err(Error::ThirdBodySingularity)
        ));
        let printed = third_body_accel(&r, &s, MU_SUN, ThirdBodyForm::Printed).unwrap();
        assert_relative_eq!(printed, -r * (MU_SUN / AU.powi(3)));
    }

    #[test]
    fn relativity_anchors() {
        let r = Vector3::new(7.0e6, 0.0, 0.0);
        let v = Vector3::new(0.0, (MU_EARTH / 7.0e6).sqrt(), 0.0);
        let a = relativity_accel(&r, &v, MU_EARTH);
        let expect = 3.0 * MU_EARTH * MU_EARTH / (C_LIGHT * C_LIGHT * 7.0e6f64.powi(3));
        assert_relative_eq!(a.x, expect, max_relative = 1e-12);
        assert_relative_eq!(a.y, 0.0);
        let ratio = a.norm() / (MU_EARTH / 49.0e12);
        assert!(ratio > 1e-10 && ratio < 1e-8, "{ratio:e}");

        let a0 = relativity_accel(&r, &Vector3::zeros(), MU_EARTH);
        assert_relative_eq!(
            a0.x,
            4.0 * MU_EARTH * MU_EARTH / (C_LIGHT * C_LIGHT * 7.0e6f64.powi(3)),
            max_relative = 1e-14
        );
    }

    #[test]
    fn albedo_over_subsolar_point_is_radial() {
        let mut settings = AlbedoSettings::default();
        settings.coefficients.a2 = 0.0;
        settings.coefficients.e2 = 0.0;
        let grid = AlbedoGrid::new(&settings).unwrap();
        let sun = Vector3::new(0.0, AU, 0.0);
        let r = Vector3::new(0.0, R_EARTH + 2.0e6, 0.0);
        let a = albedo_accel(&r, &sun, &grid, PI / 50.0);
        assert!(a.angle(&r).to_degrees() < 1.0);

        let a2 = albedo_accel(&r, &sun, &grid, 2.0 * PI / 50.0);
        assert_relative_eq!(a2, a * 2.0, max_relative = 1e-15);
    }

    #[test]
    fn albedo_night_side_is_emission_only() {
        let grid = AlbedoGrid::new(&AlbedoSettings::default()).unwrap();
        let sun = Vector3::new(AU, 0.0, 0.0);
        let r = Vector3::new(-(R_EARTH + 6.0e5), 0.0, 0.0);
        let (total, per) = albedo_accel_elements(&r, &sun, &grid, PI / 50.0);
        assert!(total.norm() > 0.0);
        let sun_hat = sun.normalize();
        for (i, a) in per.iter().enumerate() {
            if a.norm() > 0.0 {
                let irr = grid.element_irradiance(i, &sun_hat, &r);
                assert!(!irr.lit);
            }
        }
    }

    #[test]
    fn gravity_gradient_anchors() {
        let r = Vector3::new(7.0e6, 0.0, 0.0);
        assert_eq!(
            gravity_gradient_torque(&r, &(Matrix3::identity() * 4.0), MU_EARTH),
            Vector3::zeros()
        );
        let j = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(gravity_gradient_torque(&r, &j, MU_EARTH), Vector3::zeros());
        let u = Vector3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        let t = gravity_gradient_torque(&(u * 7.0e6), &j, MU_EARTH);
        // r̂ × J r̂ = (1,1,1)×(1,2,3)/3 = (1,−2,1)/3
        let k = 3.0 * MU_EARTH / 7.0e6f64.powi(3);
        assert_relative_eq!(t, Vector3::new(1.0, -2.0, 1.0) * (k / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn offset_torque_anchor() {
        let mut sc = sphere();
        let q = Quaternion::identity();
        assert_eq!(offset_torque(&Vector3::new(1.0, 2.0, 3.0), &q, &sc), Vector3::zeros());
        sc.cp_offset = Vector3::new(0.01, 0.0, 0.0);
        let f = 3.0;
        let t = offset_torque(&Vector3::new(0.0, f / sc.mass, 0.0), &q, &sc);
        assert_relative_eq!(t, Vector3::new(0.0, 0.0, 0.01 * f), max_relative = 1e-15);
        assert_eq!(offset_torque(&Vector3::new(1.0, 0.0, 0.0), &q, &sc), Vector3::zeros());
    }

    #[test]
    fn everything_off_is_exact_zero() {
        let mut set = PerturbationSet::new(env());
        set.accel = AccelToggles::all(false);
        set.torque = TorqueToggles::all(false);
        let b = evaluate_all(&leo_state(), &sphere(), &set, Epoch(0.0)).unwrap();
        assert_eq!(b.total_accel, Vector3::zeros());
        assert_eq!(b.total_torque, Vector3::zeros());
    }

    #[test]
    fn single_contributor_runs_sum_bitwise() {
        let env = env();
        let mut sc = sphere();
        sc.cp_offset = Vector3::new(0.01, -0.02, 0.005);
        sc.inertia = Matrix3::from_diagonal(&Vector3::new(30.0, 34.0, 38.0));
        for radiation in [RadiationModel::Lumped, RadiationModel::Facet] {
            let mut set = PerturbationSet::new(env.clone());
            set.radiation = radiation;
            set.torque.bias = true;
            set.bias_torque = Vector3::new(1e-6, 0.0, -2e-6);
            if radiation == RadiationModel::Facet {
                set.torque.srp = false;
                set.torque.albedo = false;
                set.torque.facet_radiation = true;
            }
            set.validate().unwrap();
            let s = leo_state();
            let all = evaluate_all(&s, &sc, &set, Epoch(3.0e6)).unwrap();
            let mut acc = Vector3::zeros();
            for i in 0..8 {
                let mut single = set.clone();
                single.accel = AccelToggles::only(i);
                single.torque = TorqueToggles::all(false);
                let b = evaluate_all(&s, &sc, &single, Epoch(3.0e6)).unwrap();
                assert_eq!(b.accel[i], all.accel[i], "{}", ACCEL_NAMES[i]);
                acc = if i == 0 { b.total_accel } else { acc + b.total_accel };
            }
            assert_eq!(acc, all.total_accel);
            let mut tq = Vector3::zeros();
            for i in 0..6 {
                if !set.torque.as_array()[i] {
                    continue;
                }
                let mut single = set.clone();
                single.accel = AccelToggles::all(false);
                single.torque = TorqueToggles::only(i);
                let b = evaluate_all(&s, &sc, &single, Epoch(3.0e6)).unwrap();
                assert_eq!(b.torque[i], all.torque[i], "{}", TORQUE_NAMES[i]);
                tq += b.total_torque;
            }
            assert_eq!(tq, all.total_torque);
        }
    }

    #[test]
    fn facet_and_offset_torques_conflict() {
        let mut set = PerturbationSet::new(env());
        set.radiation = RadiationModel::Facet;
        set.torque.facet_radiation = true;
        assert!(matches!(set.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn magnitude_ordering_at_600_km() {
        let set = PerturbationSet::new(env());
        let s = leo_state();
        let b = evaluate_all(&s, &sphere(), &set, Epoch(2.0e7)).unwrap();
        let m = b.accel_magnitudes();
        let g = m[0];
        for (i, &x) in m.iter().enumerate().skip(1) {
            assert!(x < 1e-4 * g, "{} {x:e}", ACCEL_NAMES[i]);
        }
        assert!((1.0..100.0).contains(&g));
        for i in [1, 2, 7] {
            assert!((1e-8..1e-6).contains(&m[i]), "{} {:e}", ACCEL_NAMES[i], m[i]);
            assert!(m[i] > m[6], "{} vs relativity", ACCEL_NAMES[i]);
        }
        assert!((1e-9..1e-7).contains(&m[6]), "{:e}", m[6]);
    }
}
