//! Time scale, reference frames and quaternion algebra.
//!
//! Quaternions are stored scalar-last (`[x, y, z, w]`) and compose with the
//! Hamilton product. A spacecraft attitude `q` maps BODY components into ECI
//! components, `v_eci = q ⊗ v_body ⊗ q*`, which makes the kinematics
//! `q̇ = ½ q ⊗ [ω_body; 0]` hold with the body rate expressed in BODY.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{DAYS_PER_CENTURY, EARTH_ANGLE_J2000, OMEGA_EARTH, SECONDS_PER_DAY};
use crate::error::{Error, Result};

/// Seconds on a single uniform time scale, counted from the reference epoch
/// (J2000.0 by default).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Epoch(pub f64);

impl Epoch {
    pub const J2000: Epoch = Epoch(0.0);

    pub fn seconds(self) -> f64 {
        self.0
    }

    pub fn days(self) -> f64 {
        self.0 / SECONDS_PER_DAY
    }

    pub fn julian_centuries(self) -> f64 {
        self.days() / DAYS_PER_CENTURY
    }
}

impl Add<f64> for Epoch {
    type Output = Epoch;
    fn add(self, dt: f64) -> Epoch {
        Epoch(self.0 + dt)
    }
}

impl Sub for Epoch {
    type Output = f64;
    fn sub(self, rhs: Epoch) -> f64 {
        self.0 - rhs.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Frame {
    Eci,
    Lvlh,
    Body,
}

/// A vector tagged with the frame its components are expressed in.
///
/// Arithmetic between different frames is rejected; transform first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Framed {
    pub frame: Frame,
    pub vec: Vector3<f64>,
}

impl Framed {
    pub fn new(frame: Frame, vec: Vector3<f64>) -> Self {
        Self { frame, vec }
    }

    pub fn eci(vec: Vector3<f64>) -> Self {
        Self::new(Frame::Eci, vec)
    }

    pub fn body(vec: Vector3<f64>) -> Self {
        Self::new(Frame::Body, vec)
    }

    pub fn try_add(self, rhs: Framed) -> Result<Framed> {
        self.same_frame(&rhs)?;
        Ok(Framed::new(self.frame, self.vec + rhs.vec))
    }

    pub fn try_sub(self, rhs: Framed) -> Result<Framed> {
        self.same_frame(&rhs)?;
        Ok(Framed::new(self.frame, self.vec - rhs.vec))
    }

    pub fn try_cross(self, rhs: Framed) -> Result<Framed> {
        self.same_frame(&rhs)?;
        Ok(Framed::new(self.frame, self.vec.cross(&rhs.vec)))
    }

    /// Re-express a vector with an explicit rotation `to ← from`.
    pub fn transform(self, rotation: &Matrix3<f64>, to: Frame) -> Framed {
        Framed::new(to, rotation * self.vec)
    }

    fn same_frame(&self, rhs: &Framed) -> Result<()> {
        if self.frame == rhs.frame {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                left: self.frame,
                right: rhs.frame,
            })
        }
    }
}

/// Scalar-last quaternion `[vec; scalar]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub vec: Vector3<f64>,
    pub scalar: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quaternion {
    pub fn new(vec: Vector3<f64>, scalar: f64) -> Self {
        Self { vec, scalar }
    }

    /// Components in `[q1, q2, q3, q4]` order, `q4` scalar.
    pub fn from_array(q: [f64; 4]) -> Self {
        Self::new(Vector3::new(q[0], q[1], q[2]), q[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.vec.x, self.vec.y, self.vec.z, self.scalar]
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), 1.0)
    }

    /// Rotation by `angle` radians about `axis` (need not be unit).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let half = 0.5 * angle;
        Self::new(axis.normalize() * half.sin(), half.cos())
    }

    pub fn norm(&self) -> f64 {
        (self.vec.norm_squared() + self.scalar * self.scalar).sqrt()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm();
        Self::new(self.vec / n, self.scalar / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(-self.vec, self.scalar)
    }

    /// Inverse of a unit quaternion.
    pub fn inverse(&self) -> Self {
        self.conjugate()
    }

    /// Representative with non-negative scalar part.
    pub fn canonical(&self) -> Self {
        if self.scalar < 0.0 {
            -*self
        } else {
            *self
        }
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.vec.dot(&other.vec) + self.scalar * other.scalar
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let q = self.canonical();
        2.0 * q.vec.norm().atan2(q.scalar)
    }

    /// `q ⊗ v ⊗ q*`: BODY → ECI for an attitude quaternion.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let t = 2.0 * self.vec.cross(v);
        v + self.scalar * t + self.vec.cross(&t)
    }

    /// `q* ⊗ v ⊗ q`: ECI → BODY for an attitude quaternion.
    pub fn rotate_inverse(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.conjugate().rotate(v)
    }

    /// Hamilton product without renormalization (used for `q ⊗ [ω; 0]`).
    pub fn hamilton(&self, rhs: &Quaternion) -> Quaternion {
        Quaternion::new(
            self.scalar * rhs.vec + rhs.scalar * self.vec + self.vec.cross(&rhs.vec),
            self.scalar * rhs.scalar - self.vec.dot(&rhs.vec),
        )
    }

    pub fn check_unit(&self, tol: f64) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() > tol || !norm.is_finite() {
            return Err(Error::InvalidQuaternion { norm });
        }
        Ok(())
    }

    /// Rotation matrix `R` with `R v = q ⊗ v ⊗ q*`.
    pub fn to_rotation(&self) -> Result<Matrix3<f64>> {
        self.check_unit(1e-6)?;
        Ok(self.to_rotation_unchecked())
    }

    pub(crate) fn to_rotation_unchecked(&self) -> Matrix3<f64> {
        let v = self.vec;
        let s = self.scalar;
        let skew = v.cross_matrix();
        Matrix3::identity() * (s * s - v.norm_squared()) + 2.0 * v * v.transpose() + 2.0 * s * skew
    }

    /// Inverse of [`Quaternion::to_rotation`] (Shepperd's branch selection).
    pub fn from_rotation(m: &Matrix3<f64>) -> Quaternion {
        let trace = m.trace();
        let q = if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
            let s = 2.0 * (1.0 + trace).sqrt();
            Quaternion::new(
                Vector3::new(
                    (m[(2, 1)] - m[(1, 2)]) / s,
                    (m[(0, 2)] - m[(2, 0)]) / s,
                    (m[(1, 0)] - m[(0, 1)]) / s,
                ),
                0.25 * s,
            )
        } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            Quaternion::new(
                Vector3::new(0.25 * s, (m[(0, 1)] + m[(1, 0)]) / s, (m[(0, 2)] + m[(2, 0)]) / s),
                (m[(2, 1)] - m[(1, 2)]) / s,
            )
        } else if m[(1, 1)] >= m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            Quaternion::new(
                Vector3::new((m[(0, 1)] + m[(1, 0)]) / s, 0.25 * s, (m[(1, 2)] + m[(2, 1)]) / s),
                (m[(0, 2)] - m[(2, 0)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            Quaternion::new(
                Vector3::new((m[(0, 2)] + m[(2, 0)]) / s, (m[(1, 2)] + m[(2, 1)]) / s, 0.25 * s),
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        };
        q.normalize().canonical()
    }

    /// 3-2-1 (yaw, pitch, roll) Euler angles of the rotation, radians,
    /// returned as `[roll, pitch, yaw]`.
    pub fn euler_321(&self) -> [f64; 3] {
        let m = self.to_rotation_unchecked();
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        [roll, pitch, yaw]
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.vec, -self.scalar)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        self.hamilton(&rhs)
    }
}

/// Normalized Hamilton product `a ⊗ b`.
pub fn quat_multiply(a: &Quaternion, b: &Quaternion) -> Quaternion {
    a.hamilton(b).normalize()
}

/// Local-vertical / local-horizontal triad, components in ECI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvlhBasis {
    /// Radial, `r / |r|`.
    pub x_hat: Vector3<f64>,
    /// Along-track, completes the triad.
    pub y_hat: Vector3<f64>,
    /// Orbit normal, `r × v / |r × v|`.
    pub z_hat: Vector3<f64>,
}

impl LvlhBasis {
    /// Matrix whose columns are the LVLH axes, i.e. the rotation ECI ← LVLH.
    pub fn to_eci(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.x_hat, self.y_hat, self.z_hat])
    }

    /// Attitude quaternion of a body frame aligned with this triad.
    pub fn quaternion(&self) -> Quaternion {
        Quaternion::from_rotation(&self.to_eci())
    }
}

pub fn lvlh_basis(r: &Vector3<f64>, v: &Vector3<f64>) -> Result<LvlhBasis> {
    let r_norm = r.norm();
    if r_norm == 0.0 || !r_norm.is_finite() {
        return Err(Error::DegenerateFrame("zero position vector"));
    }
    let h = r.cross(v);
    let h_norm = h.norm();
    if h_norm <= 1e-12 * r_norm * v.norm() || h_norm == 0.0 {
        return Err(Error::DegenerateFrame("position and velocity are parallel"));
    }
    let x_hat = r / r_norm;
    let z_hat = h / h_norm;
    let y_hat = z_hat.cross(&x_hat);
    Ok(LvlhBasis { x_hat, y_hat, z_hat })
}

/// Uniform spin of the Earth-fixed frame about ECI z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarthRotation {
    /// Rotation angle at the reference epoch, rad.
    pub angle_at_reference: f64,
    /// Rate, rad/s.
    pub rate: f64,
}

impl Default for EarthRotation {
    fn default() -> Self {
        Self {
            angle_at_reference: EARTH_ANGLE_J2000,
            rate: OMEGA_EARTH,
        }
    }
}

impl EarthRotation {
    pub fn angle(&self, epoch: Epoch) -> f64 {
        self.angle_at_reference + self.rate * epoch.seconds()
    }

    /// Rotation Earth-fixed ← ECI.
    pub fn eci_to_fixed(&self, epoch: Epoch) -> Matrix3<f64> {
        let (s, c) = self.angle(epoch).sin_cos();
        Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn angular_velocity(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.rate)
    }
}

/// Geocentric spherical coordinates of an ECI position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geocentric {
    pub latitude: f64,
    pub longitude: f64,
    pub radius: f64,
}

pub fn eci_to_geodetic(r: &Vector3<f64>, epoch: Epoch, earth: &EarthRotation) -> Geocentric {
    let fixed = earth.eci_to_fixed(epoch) * r;
    let radius = fixed.norm();
    let rho = fixed.x.hypot(fixed.y);
    Geocentric {
        latitude: fixed.z.atan2(rho),
        longitude: fixed.y.atan2(fixed.x),
        radius,
    }
}

/// Classical Keplerian elements. Angles in radians, `a` in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitalElements {
    pub a: f64,
    pub e: f64,
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    /// True anomaly.
    pub nu: f64,
}

impl OrbitalElements {
    pub fn circular(radius: f64, inclination: f64, raan: f64, arg_lat: f64) -> Self {
        Self {
            a: radius,
            e: 0.0,
            i: inclination,
            raan,
            argp: 0.0,
            nu: arg_lat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a.is_finite()
            && self.a > 0.0
            && (0.0..1.0).contains(&self.e)
            && [self.i, self.raan, self.argp, self.nu].iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::config("orbital elements must describe a closed orbit"))
        }
    }

    pub fn mean_motion(&self, mu: f64) -> f64 {
        (mu / self.a.powi(3)).sqrt()
    }

    pub fn period(&self, mu: f64) -> f64 {
        2.0 * std::f64::consts::PI / self.mean_motion(mu)
    }

    /// Inertial position and velocity.
    pub fn to_state(&self, mu: f64) -> (Vector3<f64>, Vector3<f64>) {
        let p = self.a * (1.0 - self.e * self.e);
        let (sn, cn) = self.nu.sin_cos();
        let r = p / (1.0 + self.e * cn);
        let r_pf = Vector3::new(r * cn, r * sn, 0.0);
        let k = (mu / p).sqrt();
        let v_pf = Vector3::new(-k * sn, k * (self.e + cn), 0.0);
        let m = rot3(self.raan) * rot1(self.i) * rot3(self.argp);
        (m * r_pf, m * v_pf)
    }

    pub fn from_state(r: &Vector3<f64>, v: &Vector3<f64>, mu: f64) -> Result<Self> {
        let h = r.cross(v);
        let rn = r.norm();
        if rn == 0.0 || h.norm() == 0.0 {
            return Err(Error::DegenerateFrame("rectilinear or zero state"));
        }
        let e_vec = v.cross(&h) / mu - r / rn;
        let e = e_vec.norm();
        let energy = 0.5 * v.norm_squared() - mu / rn;
        if energy >= 0.0 {
            return Err(Error::config("state is not on a closed orbit"));
        }
        let a = -mu / (2.0 * energy);
        let i = (h.z / h.norm()).clamp(-1.0, 1.0).acos();
        let node = Vector3::z().cross(&h);
        let (raan, node_hat) = if node.norm() > 1e-12 * h.norm() {
            (
                node.y.atan2(node.x).rem_euclid(2.0 * std::f64::consts::PI),
                node.normalize(),
            )
        } else {
            (0.0, Vector3::x())
        };
        let h_hat = h.normalize();
        let angle_from = |from: &Vector3<f64>, to: &Vector3<f64>| {
            let y = h_hat.dot(&from.cross(to));
            y.atan2(from.dot(to)).rem_euclid(2.0 * std::f64::consts::PI)
        };
        let (argp, nu) = if e > 1e-12 {
            (angle_from(&node_hat, &e_vec), angle_from(&e_vec, r))
        } else {
            (0.0, angle_from(&node_hat, r))
        };
        Ok(Self {
            a,
            e,
            i,
            raan,
            argp,
            nu,
        })
    }
}

fn rot1(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot3(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Follower state relative to a leader, LVLH components, derivatives taken in
/// the rotating frame.
pub fn relative_lvlh(
    leader_r: &Vector3<f64>,
    leader_v: &Vector3<f64>,
    r: &Vector3<f64>,
    v: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let basis = lvlh_basis(leader_r, leader_v)?;
    let m = basis.to_eci().transpose();
    let omega = leader_r.cross(leader_v) / leader_r.norm_squared();
    let dr = r - leader_r;
    let dv = v - leader_v - omega.cross(&dr);
    Ok((m * dr, m * dv))
}

/// Inverse of [`relative_lvlh`].
pub fn absolute_from_lvlh(
    leader_r: &Vector3<f64>,
    leader_v: &Vector3<f64>,
    rel_r: &Vector3<f64>,
    rel_v: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let basis = lvlh_basis(leader_r, leader_v)?;
    let m = basis.to_eci();
    let omega = leader_r.cross(leader_v) / leader_r.norm_squared();
    let dr = m * rel_r;
    let dv = m * rel_v + omega.cross(&dr);
    Ok((leader_r + dr, leader_v + dv))
}
