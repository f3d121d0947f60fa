//! Fixed-step RK4 integration of the coupled translational/rotational state.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::R_EARTH;
use crate::control::{ControlCommand, ReactionWheelSet};
use crate::error::{Error, Result};
use crate::facet::FacetedSpacecraft;
use crate::frames::{Epoch, Quaternion};
use crate::perturbations::{evaluate_all, AccelBreakdown, PerturbationSet};

/// Position and velocity (ECI), attitude (BODY to ECI) and body rate (BODY).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector13 {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quaternion,
    pub w: Vector3<f64>,
}

impl StateVector13 {
    pub fn to_array(&self) -> [f64; 13] {
        let q = self.q.to_array();
        [
            self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z, q[0], q[1], q[2], q[3], self.w.x, self.w.y,
            self.w.z,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub s: StateVector13,
    /// Wheel momenta about their spin axes, N·m·s.
    pub h_w: Vec<f64>,
}

impl ExtendedState {
    pub fn new(s: StateVector13, n_wheels: usize) -> Self {
        Self {
            s,
            h_w: vec![0.0; n_wheels],
        }
    }

    /// Stored wheel momentum expressed in BODY.
    pub fn wheel_momentum_body(&self, wheels: Option<&ReactionWheelSet>) -> Vector3<f64> {
        match wheels {
            Some(ws) => ws.axes.iter().zip(&self.h_w).map(|(a, h)| a * *h).sum(),
            None => Vector3::zeros(),
        }
    }

    fn advance(&self, d: &Derivative, h: f64) -> ExtendedState {
        let q = self.s.q;
        ExtendedState {
            s: StateVector13 {
                r: self.s.r + d.r * h,
                v: self.s.v + d.v * h,
                q: Quaternion::new(q.vec + d.q.vec * h, q.scalar + d.q.scalar * h),
                w: self.s.w + d.w * h,
            },
            h_w: self.h_w.iter().zip(&d.h_w).map(|(x, dx)| x + dx * h).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quaternion,
    pub w: Vector3<f64>,
    pub h_w: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub renormalize_every: usize,
    pub max_steps: usize,
    /// Keep every `stride`-th step (the final state is always kept).
    pub stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1.0,
            renormalize_every: 1,
            max_steps: 10_000_000,
            stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("integrator dt must be positive"));
        }
        if self.stride == 0 || self.renormalize_every == 0 {
            return Err(Error::config("stride and renormalize_every must be at least 1"));
        }
        Ok(())
    }

    pub fn step_count(&self, t0: f64, tf: f64) -> usize {
        let m = ((tf - t0) / self.dt).ceil() as usize;
        // guard against round-up from representation error
        if m > 0 && t0 + (m - 1) as f64 * self.dt >= tf {
            m - 1
        } else {
            m
        }
    }
}

/// Spacecraft, actuators and disturbance models seen by the integrator.
#[derive(Debug, Clone)]
pub struct Plant {
    pub sc: FacetedSpacecraft,
    pub wheels: Option<ReactionWheelSet>,
    pub set: PerturbationSet,
    pub inertia_inv: Matrix3<f64>,
}

impl Plant {
    pub fn new(sc: FacetedSpacecraft, wheels: Option<ReactionWheelSet>, set: PerturbationSet) -> Result<Self> {
        sc.validate()?;
        set.validate()?;
        if let Some(ws) = &wheels {
            ws.validate()?;
        }
        let inertia_inv = sc
            .inertia
            .try_inverse()
            .ok_or_else(|| Error::config("inertia tensor is singular"))?;
        Ok(Self {
            sc,
            wheels,
            set,
            inertia_inv,
        })
    }

    pub fn n_wheels(&self) -> usize {
        self.wheels.as_ref().map_or(0, |w| w.axes.len())
    }
}

/// State feedback evaluated once per step and held over it.
pub trait Controller {
    fn command(&mut self, epoch: Epoch, x: &ExtendedState, plant: &Plant) -> Result<ControlCommand>;
}

pub struct NoControl;

impl Controller for NoControl {
    fn command(&mut self, _epoch: Epoch, x: &ExtendedState, _plant: &Plant) -> Result<ControlCommand> {
        Ok(ControlCommand::zero(x.h_w.len()))
    }
}

/// Time derivative of the extended state under a held command.
pub fn derivatives(
    x: &ExtendedState,
    epoch: Epoch,
    plant: &Plant,
    cmd: &ControlCommand,
) -> Result<(Derivative, AccelBreakdown)> {
    let q_raw = x.s.q;
    let eval_state = StateVector13 {
        q: q_raw.normalize(),
        ..x.s
    };
    let breakdown = evaluate_all(&eval_state, &plant.sc, &plant.set, epoch)?;

    let mut torque = breakdown.total_torque;
    if cmd.dipole != Vector3::zeros() {
        torque += cmd.dipole.cross(&plant.set.magnetic_field_body(&eval_state));
    }
    let mut h_dot = vec![0.0; x.h_w.len()];
    let mut h_body = Vector3::zeros();
    if let Some(ws) = &plant.wheels {
        for (i, axis) in ws.axes.iter().enumerate() {
            let on_wheel = -cmd.wheel_torque.get(i).copied().unwrap_or(0.0) - ws.friction * x.h_w[i] / ws.inertia;
            h_dot[i] = on_wheel;
            torque -= axis * on_wheel;
            h_body += axis * x.h_w[i];
        }
    }
    let w = x.s.w;
    let j = &plant.sc.inertia;
    let w_dot = plant.inertia_inv * (torque - w.cross(&(j * w + h_body)));
    let q_dot = q_raw.hamilton(&Quaternion::new(w, 0.0));
    let d = Derivative {
        r: x.s.v,
        v: breakdown.total_accel + cmd.thrust_accel,
        q: Quaternion::new(q_dot.vec * 0.5, q_dot.scalar * 0.5),
        w: w_dot,
        h_w: h_dot,
    };
    Ok((d, breakdown))
}

/// One RK4 step; returns the new state (quaternion not yet renormalized) and
/// the breakdown at the start of the step.
pub fn rk4_step(
    x: &ExtendedState,
    epoch: Epoch,
    h: f64,
    plant: &Plant,
    cmd: &ControlCommand,
) -> Result<(ExtendedState, AccelBreakdown)> {
    let (k1, b) = derivatives(x, epoch, plant, cmd)?;
    let (k2, _) = derivatives(&x.advance(&k1, 0.5 * h), epoch + 0.5 * h, plant, cmd)?;
    let (k3, _) = derivatives(&x.advance(&k2, 0.5 * h), epoch + 0.5 * h, plant, cmd)?;
    let (k4, _) = derivatives(&x.advance(&k3, h), epoch + h, plant, cmd)?;
    let c = h / 6.0;
    let combine = |a: f64, b: f64, cc: f64, d: f64| a + 2.0 * b + 2.0 * cc + d;
    let q0 = x.s.q;
    let next = ExtendedState {
        s: StateVector13 {
            r: x.s.r + (k1.r + k2.r * 2.0 + k3.r * 2.0 + k4.r) * c,
            v: x.s.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * c,
            q: Quaternion::new(
                q0.vec + (k1.q.vec + k2.q.vec * 2.0 + k3.q.vec * 2.0 + k4.q.vec) * c,
                q0.scalar + combine(k1.q.scalar, k2.q.scalar, k3.q.scalar, k4.q.scalar) * c,
            ),
            w: x.s.w + (k1.w + k2.w * 2.0 + k3.w * 2.0 + k4.w) * c,
        },
        h_w: (0..x.h_w.len())
            .map(|i| x.h_w[i] + combine(k1.h_w[i], k2.h_w[i], k3.h_w[i], k4.h_w[i]) * c)
            .collect(),
    };
    Ok((next, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Seconds since the start of the run.
    pub t: f64,
    pub x: ExtendedState,
    pub breakdown: AccelBreakdown,
    /// Command held over the step starting at this sample.
    pub command: ControlCommand,
    /// Geomagnetic field, BODY, T.
    pub b_body: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: Epoch,
    pub samples: Vec<Sample>,
    pub steps: usize,
    /// Largest |‖q‖ − 1| removed by renormalization.
    pub max_renormalization: f64,
    /// Time and reason of a mid-run invariant violation.
    pub failure: Option<(f64, String)>,
}

impl Trajectory {
    pub fn check(&self) -> Result<()> {
        match &self.failure {
            Some((time, reason)) => Err(Error::Propagation {
                time: *time,
                reason: reason.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }
}

fn invariant_violation(x: &ExtendedState) -> Option<String> {
    if !x.s.is_finite() || x.h_w.iter().any(|h| !h.is_finite()) {
        return Some("non-finite state".into());
    }
    let r = x.s.r.norm();
    if r <= R_EARTH {
        return Some(format!("radius {r:.1} m below the Earth's surface"));
    }
    None
}

/// Integrate from `t0` (epoch of the first sample) over `duration` seconds.
pub fn propagate(
    x0: ExtendedState,
    t0: Epoch,
    duration: f64,
    cfg: &IntegratorConfig,
    plant: &Plant,
    controller: &mut dyn Controller,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(duration > 0.0) {
        return Err(Error::config("propagation duration must be positive"));
    }
    if x0.h_w.len() != plant.n_wheels() {
        return Err(Error::config("wheel state does not match the wheel set"));
    }
    x0.s.q.check_unit(1e-9)?;
    let steps = cfg.step_count(0.0, duration);
    if steps > cfg.max_steps {
        return Err(Error::config(format!(
            "{steps} steps exceed max_steps {}",
            cfg.max_steps
        )));
    }

    let mut traj = Trajectory {
        t0,
        samples: Vec::with_capacity(steps / cfg.stride + 2),
        steps,
        max_renormalization: 0.0,
        failure: None,
    };
    let mut x = x0;
    for k in 0..=steps {
        let t = if k == steps { duration } else { k as f64 * cfg.dt };
        let epoch = t0 + t;
        let keep = k % cfg.stride == 0 || k == steps;
        let cmd = if k < steps || keep {
            match controller.command(epoch, &x, plant) {
                Ok(c) => c,
                Err(e) => {
                    traj.failure = Some((t, e.to_string()));
                    break;
                }
            }
        } else {
            ControlCommand::zero(x.h_w.len())
        };
        let result = if k < steps {
            let h = if k + 1 == steps { duration - t } else { cfg.dt };
            rk4_step(&x, epoch, h, plant, &cmd).map(|(n, b)| (Some(n), b))
        } else {
            let eval = StateVector13 {
                q: x.s.q.normalize(),
                ..x.s
            };
            evaluate_all(&eval, &plant.sc, &plant.set, epoch).map(|b| (None, b))
        };
        let (next, breakdown) = match result {
            Ok(v) => v,
            Err(e) => {
                traj.failure = Some((t, e.to_string()));
                break;
            }
        };
        if keep {
            traj.samples.push(Sample {
                t,
                b_body: plant.set.magnetic_field_body(&x.s),
                x: x.clone(),
                breakdown,
                command: cmd,
            });
        }
        let Some(mut next) = next else { break };
        if (k + 1) % cfg.renormalize_every == 0 || k + 1 == steps {
            let n = next.s.q.norm();
            traj.max_renormalization = traj.max_renormalization.max((n - 1.0).abs());
            next.s.q = next.s.q.normalize();
        }
        if let Some(reason) = invariant_violation(&next) {
            let t_next = if k + 1 == steps {
                duration
            } else {
                (k + 1) as f64 * cfg.dt
            };
            traj.failure = Some((t_next, reason));
            if !keep {
                traj.samples.push(Sample {
                    t,
                    b_body: plant.set.magnetic_field_body(&x.s),
                    x: x.clone(),
                    breakdown,
                    command: ControlCommand::zero(x.h_w.len()),
                });
            }
            break;
        }
        x = next;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::MU_EARTH;
    use crate::environment::{AlbedoGrid, AlbedoSettings};
    use crate::facet::build_icosphere;
    use crate::geopotential::GravityModel;
    use crate::perturbations::{AccelToggles, Environment, TorqueToggles};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    pub(crate) fn two_body_plant(inertia: Matrix3<f64>) -> Plant {
        let env = Environment::new(
            GravityModel::point_mass(MU_EARTH, R_EARTH),
            AlbedoGrid::new(&AlbedoSettings {
                bands: 4,
                ..Default::default()
            })
            .unwrap(),
        );
        let mut set = PerturbationSet::new(Arc::new(env));
        set.accel = AccelToggles::only(0);
        set.torque = TorqueToggles::all(false);
        let mut sc = build_icosphere(1.0, 0, 0.3, 50.0).unwrap();
        sc.inertia = inertia;
        Plant::new(sc, None, set).unwrap()
    }

    fn circular(radius: f64) -> StateVector13 {
        let v = (MU_EARTH / radius).sqrt();
        let inc = 97.8f64.to_radians();
        StateVector13 {
            r: Vector3::new(radius, 0.0, 0.0),
            v: Vector3::new(0.0, v * inc.cos(), v * inc.sin()),
            q: Quaternion::identity(),
            w: Vector3::zeros(),
        }
    }

    #[test]
    fn principal_spin_and_rest() {
        let plant = two_body_plant(Matrix3::from_diagonal(&Vector3::new(10.0, 20.0, 30.0)));
        let mut s = circular(7.0e6);
        s.w = Vector3::new(0.0, 0.1, 0.0);
        let (d, _) = derivatives(&ExtendedState::new(s, 0), Epoch(0.0), &plant, &ControlCommand::zero(0)).unwrap();
        assert_eq!(d.w, Vector3::zeros());
        s.w = Vector3::zeros();
        let (d, _) = derivatives(&ExtendedState::new(s, 0), Epoch(0.0), &plant, &ControlCommand::zero(0)).unwrap();
        assert_eq!(d.q.to_array(), [0.0; 4]);
    }

    fn kepler_position(s: &StateVector13, t: f64) -> Vector3<f64> {
        // circular orbit: rotate r0 in the orbit plane
        let r = s.r.norm();
        let n = (MU_EARTH / r.powi(3)).sqrt();
        let (sn, cn) = (n * t).sin_cos();
        s.r * cn + s.v * (sn / n)
    }

    #[test]
    fn two_body_conservation_and_order() {
        let plant = two_body_plant(Matrix3::identity() * 33.0);
        let s0 = circular(R_EARTH + 600e3);
        let period = 2.0 * std::f64::consts::PI * (s0.r.norm().powi(3) / MU_EARTH).sqrt();
        let energy = |s: &StateVector13| 0.5 * s.v.norm_squared() - MU_EARTH / s.r.norm();
        let h0 = s0.r.cross(&s0.v).normalize();
        let drift = |dt: f64| {
            let cfg = IntegratorConfig {
                dt,
                stride: 10,
                ..Default::default()
            };
            let traj = propagate(
                ExtendedState::new(s0, 0),
                Epoch(0.0),
                10.0 * period,
                &cfg,
                &plant,
                &mut NoControl,
            )
            .unwrap();
            traj.check().unwrap();
            let e0 = energy(&s0);
            let mut worst: f64 = 0.0;
            for smp in &traj.samples {
                worst = worst.max(((energy(&smp.x.s) - e0) / e0).abs());
                let h = smp.x.s.r.cross(&smp.x.s.v).normalize();
                assert!(h.angle(&h0) < 1e-9);
            }
            worst
        };
        let (coarse, fine) = (drift(10.0), drift(5.0));
        assert!(fine < 1e-10, "{fine:e}");
        assert!(coarse / fine > 16.0, "{coarse:e} {fine:e}");

        let horizon = period;
        let miss = |dt: f64| {
            let cfg = IntegratorConfig {
                dt,
                stride: 1_000_000,
                ..Default::default()
            };
            let t = propagate(
                ExtendedState::new(s0, 0),
                Epoch(0.0),
                horizon,
                &cfg,
                &plant,
                &mut NoControl,
            )
            .unwrap();
            (t.last().x.s.r - kepler_position(&s0, horizon)).norm()
        };
        let ratio = miss(40.0) / miss(20.0);
        assert!((10.0..=30.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn row_count_and_final_time() {
        let plant = two_body_plant(Matrix3::identity() * 33.0);
        let s0 = circular(7.0e6);
        for (duration, dt, stride) in [(100.0, 1.0, 10), (95.5, 1.0, 10), (100.0, 3.0, 1), (7.0, 2.0, 3)] {
            let cfg = IntegratorConfig {
                dt,
                stride,
                ..Default::default()
            };
            let traj = propagate(
                ExtendedState::new(s0, 0),
                Epoch(0.0),
                duration,
                &cfg,
                &plant,
                &mut NoControl,
            )
            .unwrap();
            let m = (duration / dt as f64).ceil() as usize;
            assert_eq!(traj.samples.len(), m.div_ceil(stride) + 1);
            assert_eq!(traj.last().t, duration);
        }
    }

    #[test]
    fn torque_free_rigid_body() {
        let j = Matrix3::new(12.0, 0.3, -0.2, 0.3, 18.0, 0.4, -0.2, 0.4, 25.0);
        let plant = two_body_plant(j);
        let mut s0 = circular(R_EARTH + 600e3);
        s0.w = Vector3::new(0.008, -0.02, 0.012);
        let ke = |w: &Vector3<f64>| 0.5 * w.dot(&(j * w));
        let hb = |w: &Vector3<f64>| (j * w).norm();
        let cfg = IntegratorConfig::default();
        let traj = propagate(
            ExtendedState::new(s0, 0),
            Epoch(0.0),
            5800.0,
            &cfg,
            &plant,
            &mut NoControl,
        )
        .unwrap();
        for smp in &traj.samples {
            let w = smp.x.s.w;
            assert_relative_eq!(ke(&w), ke(&s0.w), max_relative = 1e-9);
            assert_relative_eq!(hb(&w), hb(&s0.w), max_relative = 1e-9);
            assert!((smp.x.s.q.norm() - 1.0).abs() < 1e-12);
        }
        assert!(traj.max_renormalization < 1e-9);
        // inertial angular momentum is also constant
        let h0 = s0.q.rotate(&(j * s0.w));
        let hf = traj.last().x.s.q.rotate(&(j * traj.last().x.s.w));
        assert_relative_eq!(h0, hf, max_relative = 1e-8);
    }

    #[test]
    fn deterministic() {
        let plant = two_body_plant(Matrix3::from_diagonal(&Vector3::new(10.0, 20.0, 30.0)));
        let mut s0 = circular(7.0e6);
        s0.w = Vector3::new(0.01, 0.02, -0.03);
        let cfg = IntegratorConfig::default();
        let a = propagate(
            ExtendedState::new(s0, 0),
            Epoch(0.0),
            300.0,
            &cfg,
            &plant,
            &mut NoControl,
        )
        .unwrap();
        let b = propagate(
            ExtendedState::new(s0, 0),
            Epoch(0.0),
            300.0,
            &cfg,
            &plant,
            &mut NoControl,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn surface_impact_is_reported() {
        let plant = two_body_plant(Matrix3::identity() * 33.0);
        let mut s0 = circular(R_EARTH + 100e3);
        s0.v *= 0.5;
        let cfg = IntegratorConfig {
            dt: 10.0,
            ..Default::default()
        };
        let traj = propagate(
            ExtendedState::new(s0, 0),
            Epoch(0.0),
            6000.0,
            &cfg,
            &plant,
            &mut NoControl,
        )
        .unwrap();
        let (t, reason) = traj.failure.clone().unwrap();
        assert!(t < 6000.0 && reason.contains("below"));
        assert!(traj.check().is_err());
        assert!(traj.last().x.s.r.norm() > R_EARTH);
    }
}
