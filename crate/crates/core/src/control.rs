//! Attitude targets, PD actuator laws, momentum dumping and tracking metrics.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{lvlh_basis, Epoch, Quaternion};
use crate::propagator::{Controller, ExtendedState, Plant, StateVector13};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MagnetorquerBank {
    pub n_coils: u32,
    pub turns: u32,
    /// m².
    pub coil_area: f64,
    /// Ω per coil.
    pub coil_resistance: f64,
    /// Per-axis dipole limit, A·m².
    pub m_max: f64,
}

impl Default for MagnetorquerBank {
    fn default() -> Self {
        Self {
            n_coils: 1,
            turns: 400,
            coil_area: 0.02,
            coil_resistance: 20.0,
            m_max: 5.0,
        }
    }
}

impl MagnetorquerBank {
    pub fn validate(&self) -> Result<()> {
        if self.n_coils == 0 || self.turns == 0 {
            return Err(Error::config("magnetorquer coil and turn counts must be positive"));
        }
        if !(self.m_max > 0.0 && self.coil_area > 0.0 && self.coil_resistance >= 0.0) {
            return Err(Error::config("magnetorquer m_max and coil area must be positive"));
        }
        Ok(())
    }

    /// Coil current producing a dipole `m` on one axis, A.
    pub fn current(&self, m: f64) -> f64 {
        m / (self.n_coils as f64 * self.turns as f64 * self.coil_area)
    }

    /// Resistive power of all coils for a commanded dipole, W.
    pub fn power(&self, dipole: &Vector3<f64>) -> f64 {
        dipole
            .iter()
            .map(|&m| {
                let i = self.current(m);
                self.n_coils as f64 * i * i * self.coil_resistance
            })
            .sum()
    }

    pub fn clamp(&self, m: Vector3<f64>) -> Vector3<f64> {
        m.map(|x| x.clamp(-self.m_max, self.m_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactionWheelSet {
    /// Spin axes, unit, BODY.
    pub axes: Vec<Vector3<f64>>,
    /// Wheel inertia about its spin axis, kg·m².
    pub inertia: f64,
    pub tau_max: f64,
    pub h_max: f64,
    /// Viscous friction, N·m per rad/s of wheel speed.
    pub friction: f64,
}

impl Default for ReactionWheelSet {
    fn default() -> Self {
        Self {
            axes: vec![Vector3::x(), Vector3::y(), Vector3::z()],
            inertia: 1.0e-3,
            tau_max: 5.0e-3,
            h_max: 0.05,
            friction: 1.0e-7,
        }
    }
}

impl ReactionWheelSet {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 6 {
            return Err(Error::config("reaction wheel set needs between 1 and 6 wheels"));
        }
        for a in &self.axes {
            if (a.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::config("wheel axes must be unit vectors"));
            }
        }
        if !(self.inertia > 0.0 && self.tau_max > 0.0 && self.h_max > 0.0 && self.friction >= 0.0) {
            return Err(Error::config("invalid reaction wheel parameters"));
        }
        if self.axes.len() >= 3 && self.allocation().is_none() {
            return Err(Error::config("wheel axes do not span three dimensions"));
        }
        Ok(())
    }

    fn axis_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(3, self.axes.len(), |i, j| self.axes[j][i])
    }

    /// Minimum-norm allocation `Aᵀ(AAᵀ)⁻¹`, wheels × 3.
    pub fn allocation(&self) -> Option<nalgebra::DMatrix<f64>> {
        let a = self.axis_matrix();
        let aat: Matrix3<f64> = Matrix3::from_iterator((&a * a.transpose()).iter().copied());
        let inv = aat.try_inverse()?;
        let inv_d = nalgebra::DMatrix::from_iterator(3, 3, inv.iter().copied());
        Some(a.transpose() * inv_d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetMode {
    #[default]
    NadirFixed,
    OrbitNormalSpin,
    SlewTo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttitudeTarget {
    pub mode: TargetMode,
    /// Inertial target attitude for `SLEW_TO`.
    pub quaternion: Quaternion,
    /// Spin rate about the orbit normal for `ORBIT_NORMAL_SPIN`, rad/s.
    pub spin_rate: f64,
}

impl Default for AttitudeTarget {
    fn default() -> Self {
        Self {
            mode: TargetMode::NadirFixed,
            quaternion: Quaternion::identity(),
            spin_rate: 0.0,
        }
    }
}

/// Target attitude and desired body rate (ECI components) at a state.
pub fn target_attitude(s: &StateVector13, target: &AttitudeTarget) -> Result<(Quaternion, Vector3<f64>)> {
    match target.mode {
        TargetMode::NadirFixed => {
            let basis = lvlh_basis(&s.r, &s.v)?;
            let rate = s.r.cross(&s.v) / s.r.norm_squared();
            Ok((basis.quaternion(), rate))
        }
        TargetMode::OrbitNormalSpin => {
            let basis = lvlh_basis(&s.r, &s.v)?;
            let z = basis.z_hat;
            // keep the current spin phase: only the spin axis is regulated
            let bx = s.q.rotate(&Vector3::x());
            let mut x = bx - z * z.dot(&bx);
            if x.norm() < 1e-6 {
                let by = s.q.rotate(&Vector3::y());
                x = z.cross(&by);
            }
            let x = x.normalize();
            let y = z.cross(&x);
            let q = Quaternion::from_rotation(&Matrix3::from_columns(&[x, y, z]));
            Ok((q, z * target.spin_rate))
        }
        TargetMode::SlewTo => Ok((target.quaternion, Vector3::zeros())),
    }
}

/// `q_err = q_target⁻¹ ⊗ q` with non-negative scalar part, and `ω − ω_d` in BODY.
pub fn attitude_error(s: &StateVector13, target: &AttitudeTarget) -> Result<(Quaternion, Vector3<f64>)> {
    let (q_t, w_d_eci) = target_attitude(s, target)?;
    let q_err = q_t.inverse().hamilton(&s.q).normalize().canonical();
    Ok((q_err, s.w - s.q.rotate_inverse(&w_d_eci)))
}

/// Rotation angle of an error quaternion, rad.
pub fn error_angle(q_err: &Quaternion) -> f64 {
    2.0 * q_err.vec.norm().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl PdGains {
    /// Critically damped derivative gain for mean principal inertia `j_mean`.
    pub fn critically_damped(kp: f64, j_mean: f64) -> Self {
        Self {
            kp,
            kd: 2.0 * (kp * j_mean).sqrt(),
        }
    }

    pub fn law(&self, q_err: &Quaternion, w_err: &Vector3<f64>) -> Vector3<f64> {
        -q_err.vec * self.kp - w_err * self.kd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    /// Magnetic dipole, A·m², BODY.
    pub dipole: Vector3<f64>,
    /// Torque each wheel delivers to the body along its axis, N·m; the wheel
    /// itself receives the opposite torque.
    pub wheel_torque: Vec<f64>,
    /// Realized body torque at the command instant, N·m, BODY.
    pub torque: Vector3<f64>,
    /// W.
    pub power: f64,
    pub saturated: bool,
    /// Translational control acceleration, m/s², ECI.
    pub thrust_accel: Vector3<f64>,
}

impl ControlCommand {
    pub fn zero(n_wheels: usize) -> Self {
        Self {
            dipole: Vector3::zeros(),
            wheel_torque: vec![0.0; n_wheels],
            torque: Vector3::zeros(),
            power: 0.0,
            saturated: false,
            thrust_accel: Vector3::zeros(),
        }
    }
}

/// How the PD gains map attitude errors to a dipole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnetorquerLaw {
    /// Scalar gains, `m = −Kp q − Kd ω`; gains in A·m².
    Scalar,
    /// Gain matrices `K [B]× / ‖B‖²`, so that `m × B` is the PD torque with
    /// its component along `B` removed; gains in N·m.
    #[default]
    FieldProjected,
}

fn magnetorquer_command(raw: Vector3<f64>, b_body: &Vector3<f64>, bank: &MagnetorquerBank) -> ControlCommand {
    let m = bank.clamp(raw);
    ControlCommand {
        dipole: m,
        wheel_torque: Vec::new(),
        torque: m.cross(b_body),
        power: bank.power(&m),
        saturated: m != raw,
        thrust_accel: Vector3::zeros(),
    }
}

pub fn pd_magnetorquer(
    q_err: &Quaternion,
    w_err: &Vector3<f64>,
    b_body: &Vector3<f64>,
    gains: &PdGains,
    bank: &MagnetorquerBank,
) -> ControlCommand {
    magnetorquer_command(gains.law(q_err, w_err), b_body, bank)
}

/// PD torque projected onto the plane normal to `B` and realized as a dipole.
pub fn pd_magnetorquer_projected(
    q_err: &Quaternion,
    w_err: &Vector3<f64>,
    b_body: &Vector3<f64>,
    gains: &PdGains,
    bank: &MagnetorquerBank,
) -> ControlCommand {
    let b2 = b_body.norm_squared();
    let raw = if b2 > 0.0 {
        b_body.cross(&gains.law(q_err, w_err)) / b2
    } else {
        Vector3::zeros()
    };
    magnetorquer_command(raw, b_body, bank)
}

pub fn pd_reaction_wheels(
    q_err: &Quaternion,
    w_err: &Vector3<f64>,
    gains: &PdGains,
    wheels: &ReactionWheelSet,
    h_w: &[f64],
) -> ControlCommand {
    let tau_des = gains.law(q_err, w_err);
    let alloc = wheels
        .allocation()
        .unwrap_or_else(|| nalgebra::DMatrix::from_fn(wheels.axes.len(), 3, |i, j| wheels.axes[i][j]));
    let mut saturated = false;
    let mut wheel_torque = Vec::with_capacity(wheels.axes.len());
    let mut torque = Vector3::zeros();
    let mut power = 0.0;
    for (i, axis) in wheels.axes.iter().enumerate() {
        let mut t = (0..3).map(|k| alloc[(i, k)] * tau_des[k]).sum::<f64>();
        if t.abs() > wheels.tau_max {
            t = wheels.tau_max.copysign(t);
            saturated = true;
        }
        // the wheel's momentum changes by −t; stop at the momentum limit
        let h = h_w.get(i).copied().unwrap_or(0.0);
        if h.abs() >= wheels.h_max && -t * h > 0.0 {
            t = 0.0;
            saturated = true;
        }
        let speed = h / wheels.inertia;
        power += (t * speed).abs() + wheels.friction * speed * speed;
        torque += axis * t;
        wheel_torque.push(t);
    }
    ControlCommand {
        dipole: Vector3::zeros(),
        wheel_torque,
        torque,
        power,
        saturated,
        thrust_accel: Vector3::zeros(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentumDump {
    pub enabled: bool,
    pub gain: f64,
    /// Stored-momentum magnitude above which dumping starts, N·m·s.
    pub threshold: f64,
    pub bank: MagnetorquerBank,
}

impl Default for MomentumDump {
    fn default() -> Self {
        Self {
            enabled: true,
            gain: 1.0e-3,
            threshold: 0.01,
            bank: MagnetorquerBank::default(),
        }
    }
}

/// Unloading dipole for wheel momentum `h_body` (BODY); zero below threshold.
pub fn momentum_dump(h_body: &Vector3<f64>, b_body: &Vector3<f64>, dump: &MomentumDump) -> Vector3<f64> {
    let hn = h_body.norm();
    let b2 = b_body.norm_squared();
    if !dump.enabled || hn <= dump.threshold || b2 == 0.0 {
        return Vector3::zeros();
    }
    let excess = h_body * ((hn - dump.threshold) / hn);
    dump.bank.clamp(excess.cross(b_body) * (dump.gain / b2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnetorquerController {
    pub target: AttitudeTarget,
    pub gains: PdGains,
    pub bank: MagnetorquerBank,
    pub law: MagnetorquerLaw,
}

impl Controller for MagnetorquerController {
    fn command(&mut self, _epoch: Epoch, x: &ExtendedState, plant: &Plant) -> Result<ControlCommand> {
        let (q_err, w_err) = attitude_error(&x.s, &self.target)?;
        let b = plant.set.magnetic_field_body(&x.s);
        let mut cmd = match self.law {
            MagnetorquerLaw::Scalar => pd_magnetorquer(&q_err, &w_err, &b, &self.gains, &self.bank),
            MagnetorquerLaw::FieldProjected => pd_magnetorquer_projected(&q_err, &w_err, &b, &self.gains, &self.bank),
        };
        cmd.wheel_torque = vec![0.0; x.h_w.len()];
        Ok(cmd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionWheelController {
    pub target: AttitudeTarget,
    pub gains: PdGains,
    pub dump: MomentumDump,
}

impl Controller for ReactionWheelController {
    fn command(&mut self, _epoch: Epoch, x: &ExtendedState, plant: &Plant) -> Result<ControlCommand> {
        let wheels = plant
            .wheels
            .as_ref()
            .ok_or_else(|| Error::config("reaction wheel controller needs a wheel set"))?;
        let (q_err, w_err) = attitude_error(&x.s, &self.target)?;
        let mut cmd = pd_reaction_wheels(&q_err, &w_err, &self.gains, wheels, &x.h_w);
        let b = plant.set.magnetic_field_body(&x.s);
        let h_body = x.wheel_momentum_body(Some(wheels));
        let m = momentum_dump(&h_body, &b, &self.dump);
        if m != Vector3::zeros() {
            cmd.dipole = m;
            cmd.torque += m.cross(&b);
            cmd.power += self.dump.bank.power(&m);
        }
        Ok(cmd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettlingThreshold {
    /// Multiple of the RMS error over the final hold window.
    RelativeToFinal(f64),
    /// Absolute error bound, degrees.
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettlingSpec {
    pub threshold: SettlingThreshold,
    /// Time the error must stay inside the band, s.
    pub hold: f64,
}

impl Default for SettlingSpec {
    fn default() -> Self {
        Self {
            threshold: SettlingThreshold::RelativeToFinal(2.0),
            hold: 5_800.0,
        }
    }
}

/// One tracking sample: time (s), attitude error (deg), rate error (rad/s), power (W).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSample {
    pub t: f64,
    pub error_deg: f64,
    pub rate_error: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub rms_attitude_error_deg: f64,
    pub spin_rate_error: f64,
    pub avg_power: f64,
    pub settling_time: Option<f64>,
    pub settled: bool,
    pub threshold_deg: f64,
    pub terminal_error_deg: f64,
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn tracking_metrics(samples: &[TrackingSample], spec: &SettlingSpec) -> Result<TrackingMetrics> {
    let last = samples
        .last()
        .ok_or_else(|| Error::config("metrics need at least one sample"))?;
    let t_end = last.t;
    let hold = spec.hold.min(t_end - samples[0].t);
    let threshold = match spec.threshold {
        SettlingThreshold::Absolute(x) => x,
        SettlingThreshold::RelativeToFinal(k) => {
            k * rms(samples.iter().filter(|s| s.t >= t_end - hold).map(|s| s.error_deg))
        }
    };
    // earliest start of a band-respecting run reaching the end or lasting `hold`
    let mut settling = None;
    let mut run_start: Option<f64> = None;
    for s in samples {
        if s.error_deg <= threshold {
            let start = *run_start.get_or_insert(s.t);
            if s.t - start >= hold {
                settling = Some(start);
                break;
            }
        } else {
            run_start = None;
        }
    }
    let window_start = settling.unwrap_or(samples[0].t);
    let n = samples.len() as f64;
    Ok(TrackingMetrics {
        rms_attitude_error_deg: rms(samples.iter().filter(|s| s.t >= window_start).map(|s| s.error_deg)),
        spin_rate_error: rms(samples.iter().map(|s| s.rate_error)),
        avg_power: samples.iter().map(|s| s.power).sum::<f64>() / n,
        settling_time: settling.map(|t| t - samples[0].t),
        settled: settling.is_some(),
        threshold_deg: threshold,
        terminal_error_deg: last.error_deg,
    })
}

/// Attitude/rate error and power samples of a trajectory against a target.
pub fn tracking_samples(samples: &[crate::propagator::Sample], target: &AttitudeTarget) -> Result<Vec<TrackingSample>> {
    samples
        .iter()
        .map(|s| {
            let (q_err, w_err) = attitude_error(&s.x.s, target)?;
            Ok(TrackingSample {
                t: s.t,
                error_deg: error_angle(&q_err).to_degrees(),
                rate_error: w_err.norm(),
                power: s.command.power,
            })
        })
        .collect()
}

pub fn spin_rate_metrics(
    samples: &[crate::propagator::Sample],
    target: &AttitudeTarget,
    spec: &SettlingSpec,
) -> Result<TrackingMetrics> {
    tracking_metrics(&tracking_samples(samples, target)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::MU_EARTH;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(q: Quaternion) -> StateVector13 {
        let r = 7.0e6;
        StateVector13 {
            r: Vector3::new(r, 0.0, 0.0),
            v: Vector3::new(0.0, (MU_EARTH / r).sqrt(), 0.0),
            q,
            w: Vector3::zeros(),
        }
    }

    #[test]
    fn error_anchors() {
        let target = AttitudeTarget {
            mode: TargetMode::SlewTo,
            quaternion: Quaternion::from_axis_angle(&Vector3::new(0.3, 0.1, 1.0).normalize(), 0.4),
            spin_rate: 0.0,
        };
        let (e, _) = attitude_error(&state(target.quaternion), &target).unwrap();
        assert_relative_eq!(e.vec.norm(), 0.0, epsilon = 1e-15);
        let q = target
            .quaternion
            .hamilton(&Quaternion::from_axis_angle(&Vector3::z(), 10f64.to_radians()));
        let (e, _) = attitude_error(&state(q), &target).unwrap();
        assert_relative_eq!(e.vec.norm(), 5f64.to_radians().sin(), epsilon = 1e-14);
        assert_relative_eq!(error_angle(&e).to_degrees(), 10.0, epsilon = 1e-10);
    }

    #[test]
    fn nadir_target_at_lvlh() {
        let target = AttitudeTarget::default();
        let s0 = state(Quaternion::identity());
        let (q_t, w_d) = target_attitude(&s0, &target).unwrap();
        let s = StateVector13 {
            q: q_t,
            w: q_t.rotate_inverse(&w_d),
            ..s0
        };
        let (e, w) = attitude_error(&s, &target).unwrap();
        assert!(e.vec.norm() < 1e-15);
        assert!(w.norm() < 1e-18);
        assert_relative_eq!(w_d.z, (MU_EARTH / 7.0e6f64.powi(3)).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn orbit_normal_spin_ignores_phase() {
        let target = AttitudeTarget {
            mode: TargetMode::OrbitNormalSpin,
            spin_rate: 0.02,
            ..Default::default()
        };
        // body z already on the orbit normal (ECI z here), arbitrary spin phase
        let q = Quaternion::from_axis_angle(&Vector3::z(), 1.234);
        let mut s = state(q);
        s.w = Vector3::new(0.0, 0.0, 0.02);
        let (e, w) = attitude_error(&s, &target).unwrap();
        assert!(e.vec.norm() < 1e-12);
        assert!(w.norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn error_invariant_under_common_left_rotation(
            a in prop::array::uniform4(-1.0..1.0f64),
            b in prop::array::uniform4(-1.0..1.0f64),
            c in prop::array::uniform4(-1.0..1.0f64),
        ) {
            let qa = Quaternion::from_array(a);
            let qb = Quaternion::from_array(b);
            let qc = Quaternion::from_array(c);
            prop_assume!(qa.norm() > 0.1 && qb.norm() > 0.1 && qc.norm() > 0.1);
            let (qa, qb, qc) = (qa.normalize(), qb.normalize(), qc.normalize());
            let t1 = AttitudeTarget { mode: TargetMode::SlewTo, quaternion: qb, spin_rate: 0.0 };
            let t2 = AttitudeTarget { quaternion: qc.hamilton(&qb).normalize(), ..t1 };
            let (e1, _) = attitude_error(&state(qa), &t1).unwrap();
            let (e2, _) = attitude_error(&state(qc.hamilton(&qa).normalize()), &t2).unwrap();
            for (x, y) in e1.to_array().iter().zip(e2.to_array()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn magnetorquer_torque_is_perpendicular(
            q in prop::array::uniform4(-1.0..1.0f64),
            w in prop::array::uniform3(-0.1..0.1f64),
            b in prop::array::uniform3(-5e-5..5e-5f64),
            kp in 0.0..1e4f64,
        ) {
            let q = Quaternion::from_array(q);
            prop_assume!(q.norm() > 0.1);
            let b = Vector3::from(b);
            let bank = MagnetorquerBank::default();
            let cmd = pd_magnetorquer(&q.normalize().canonical(), &Vector3::from(w), &b, &PdGains { kp, kd: 2.0 * kp }, &bank);
            prop_assert!(cmd.torque.dot(&b).abs() <= 1e-14 * cmd.torque.norm() * b.norm() + f64::MIN_POSITIVE);
            prop_assert!(cmd.dipole.amax() <= bank.m_max);
        }

        #[test]
        fn pd_law_scales_with_gains(
            q in prop::array::uniform3(-0.01..0.01f64),
            w in prop::array::uniform3(-1e-4..1e-4f64),
            lambda in 0.1..10.0f64,
        ) {
            let e = Quaternion::new(Vector3::from(q), 1.0).normalize();
            let g = PdGains { kp: 2.0, kd: 30.0 };
            let g2 = PdGains { kp: 2.0 * lambda, kd: 30.0 * lambda };
            let w = Vector3::from(w);
            let a = g.law(&e, &w) * lambda;
            let b = g2.law(&e, &w);
            prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300));
        }
    }

    #[test]
    fn magnetorquer_anchors() {
        let bank = MagnetorquerBank::default();
        let g = PdGains { kp: 1.0, kd: 1.0 };
        let b = Vector3::new(0.0, 2.0e-5, 0.0);
        let zero = pd_magnetorquer(&Quaternion::identity(), &Vector3::zeros(), &b, &g, &bank);
        assert_eq!(
            (zero.dipole, zero.torque, zero.power),
            (Vector3::zeros(), Vector3::zeros(), 0.0)
        );
        let m = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(m.cross(&b), Vector3::new(0.0, 0.0, 2.0e-5));

        let e = Quaternion::new(Vector3::new(-0.5, 0.0, 0.0), 0.75f64.sqrt());
        let cmd = pd_magnetorquer(&e, &Vector3::zeros(), &b, &g, &bank);
        assert_eq!(cmd.dipole, Vector3::new(0.5, 0.0, 0.0));
        let i = 0.5 / (400.0 * 0.02);
        assert_relative_eq!(cmd.power, i * i * 20.0, max_relative = 1e-15);
    }

    #[test]
    fn projected_law_removes_field_component() {
        let bank = MagnetorquerBank {
            m_max: 1e6,
            ..Default::default()
        };
        let g = PdGains { kp: 1e-3, kd: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut v = || {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            };
            let e = Quaternion::new(v() * 0.1, 1.0).normalize().canonical();
            let w = v() * 1e-3;
            let b = v() * 4e-5;
            let cmd = pd_magnetorquer_projected(&e, &w, &b, &g, &bank);
            let tau = g.law(&e, &w);
            let bh = b.normalize();
            let expected = tau - bh * tau.dot(&bh);
            assert!((cmd.torque - expected).norm() <= 1e-12 * tau.norm());
            assert!(cmd.torque.dot(&b).abs() <= 1e-15 * cmd.torque.norm() * b.norm());
        }
        let none = pd_magnetorquer_projected(&Quaternion::identity(), &Vector3::x(), &Vector3::zeros(), &g, &bank);
        assert_eq!(none.dipole, Vector3::zeros());
    }

    #[test]
    fn wheel_anchors() {
        let ws = ReactionWheelSet::default();
        ws.validate().unwrap();
        let g = PdGains { kp: 1.0, kd: 0.0 };
        let h = [0.01, 0.0, -0.02];
        let cmd = pd_reaction_wheels(&Quaternion::identity(), &Vector3::zeros(), &g, &ws, &h);
        assert_eq!(cmd.wheel_torque, vec![0.0; 3]);
        let fr: f64 = h.iter().map(|x| ws.friction * (x / ws.inertia).powi(2)).sum();
        assert_relative_eq!(cmd.power, fr, max_relative = 1e-15);

        let e = Quaternion::new(Vector3::new(-1e-3, 2e-3, -0.5e-3), 1.0).normalize();
        let cmd = pd_reaction_wheels(&e, &Vector3::zeros(), &g, &ws, &[0.0; 3]);
        for k in 0..3 {
            assert_relative_eq!(cmd.wheel_torque[k], -e.vec[k], max_relative = 1e-14);
        }
        assert!(!cmd.saturated);

        let big = Quaternion::new(Vector3::new(-0.2, 1e-3, 0.0), 1.0).normalize();
        let cmd = pd_reaction_wheels(&big, &Vector3::zeros(), &PdGains { kp: 1.0, kd: 0.0 }, &ws, &[0.0; 3]);
        assert_eq!(cmd.wheel_torque[0], ws.tau_max);
        assert_relative_eq!(cmd.wheel_torque[1], -big.vec.y, max_relative = 1e-14);
        assert!(cmd.saturated);
    }

    #[test]
    fn pyramid_allocation_reproduces_torque() {
        let s = 1.0 / 3f64.sqrt();
        let ws = ReactionWheelSet {
            axes: vec![
                Vector3::new(s, s, s),
                Vector3::new(-s, s, s),
                Vector3::new(-s, -s, s),
                Vector3::new(s, -s, s),
            ],
            tau_max: 1.0,
            ..Default::default()
        };
        ws.validate().unwrap();
        let e = Quaternion::new(Vector3::new(0.01, -0.02, 0.005), 1.0).normalize();
        let g = PdGains { kp: 0.1, kd: 0.0 };
        let cmd = pd_reaction_wheels(&e, &Vector3::zeros(), &g, &ws, &[0.0; 4]);
        assert_relative_eq!(cmd.torque, g.law(&e, &Vector3::zeros()), max_relative = 1e-12);
    }

    #[test]
    fn dump_law() {
        let dump = MomentumDump {
            gain: 1e-2,
            threshold: 0.01,
            ..Default::default()
        };
        let b = Vector3::new(1e-5, -2e-5, 3e-5);
        assert_eq!(
            momentum_dump(&Vector3::new(0.005, 0.0, 0.0), &b, &dump),
            Vector3::zeros()
        );
        assert_eq!(momentum_dump(&(b.normalize() * 0.05), &b, &dump).norm(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let h = Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
            let b = Vector3::from_fn(|_, _| rng.random_range(-5e-5..5e-5));
            let m = momentum_dump(&h, &b, &dump);
            assert!(h.dot(&m.cross(&b)) <= 0.0);
        }
    }

    fn series(f: impl Fn(f64) -> f64, n: usize, dt: f64) -> Vec<TrackingSample> {
        (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                TrackingSample {
                    t,
                    error_deg: f(t),
                    rate_error: 0.0,
                    power: 1.0,
                }
            })
            .collect()
    }

    #[test]
    fn metric_anchors() {
        let spec = SettlingSpec {
            hold: 100.0,
            ..Default::default()
        };
        let m = tracking_metrics(&series(|_| 0.0, 50, 1.0), &spec).unwrap();
        assert_eq!((m.rms_attitude_error_deg, m.settling_time), (0.0, Some(0.0)));
        let m = tracking_metrics(&series(|_| 0.1, 500, 1.0), &spec).unwrap();
        assert_relative_eq!(m.rms_attitude_error_deg, 0.1, max_relative = 1e-14);
        assert_eq!(m.avg_power, 1.0);
    }

    #[test]
    fn settling_of_decaying_oscillation() {
        // 10° e^{−t/200}|cos(t/30)| + 0.01°: the envelope crosses 0.05° once
        // t > 200 ln(10/0.04); after that every peak stays under the band
        let f = |t: f64| 10.0 * (-t / 200.0).exp() * (t / 30.0).cos().abs() + 0.01;
        let spec = SettlingSpec {
            threshold: SettlingThreshold::Absolute(0.05),
            hold: 500.0,
        };
        let samples = series(f, 3000, 1.0);
        let m = tracking_metrics(&samples, &spec).unwrap();
        let envelope = 200.0 * (10.0f64 / 0.04).ln();
        // last sample above the band precedes the settling time
        let last_above = samples
            .iter()
            .filter(|s| s.error_deg > 0.05)
            .map(|s| s.t)
            .fold(0.0, f64::max);
        assert_eq!(m.settling_time, Some(last_above + 1.0));
        assert!(last_above < envelope && last_above > envelope - 30.0 * std::f64::consts::PI);
        let never = tracking_metrics(
            &samples[..1000],
            &SettlingSpec {
                threshold: SettlingThreshold::Absolute(0.05),
                hold: 500.0,
            },
        )
        .unwrap();
        assert!(!never.settled && never.settling_time.is_none());
    }
}
