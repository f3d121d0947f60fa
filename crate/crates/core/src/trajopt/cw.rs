//! Clohessy–Wiltshire relative motion about a circular leader orbit.
//!
//! LVLH axes: x radial, y along-track, z orbit normal. State `[r; v]`.

use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

/// Continuous-time CW system matrix.
pub fn cw_matrix(n: f64) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    a[(3, 0)] = 3.0 * n * n;
    a[(3, 4)] = 2.0 * n;
    a[(4, 3)] = -2.0 * n;
    a[(5, 2)] = -n * n;
    a
}

/// `1 − cos x` without cancellation.
fn one_minus_cos(x: f64) -> f64 {
    2.0 * (0.5 * x).sin().powi(2)
}

/// `x − sin x` without cancellation.
fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0))))
    } else {
        x - x.sin()
    }
}

/// Closed-form state transition matrix over `t`.
pub fn cw_stm(n: f64, t: f64) -> Matrix6<f64> {
    let x = n * t;
    let (s, c) = x.sin_cos();
    let omc = one_minus_cos(x);
    #[rustfmt::skip]
    let m = Matrix6::new(
        1.0 + 3.0 * omc,      0.0, 0.0,    s / n,             2.0 * omc / n,           0.0,
        -6.0 * x_minus_sin(x), 1.0, 0.0,   -2.0 * omc / n,    (4.0 * s - 3.0 * x) / n, 0.0,
        0.0,                  0.0, c,      0.0,               0.0,                     s / n,
        3.0 * n * s,          0.0, 0.0,    c,                 2.0 * s,                 0.0,
        -6.0 * n * omc,       0.0, 0.0,    -2.0 * s,          4.0 * c - 3.0,           0.0,
        0.0,                  0.0, -n * s, 0.0,               0.0,                     c,
    );
    m
}

/// Zero-order-hold input matrix: `∫₀ᵗ Φ(τ) [0; I] dτ`.
pub fn cw_input(n: f64, t: f64) -> Matrix6x3<f64> {
    let x = n * t;
    let s = x.sin();
    let n2 = n * n;
    let omc = one_minus_cos(x);
    let xms = x_minus_sin(x);
    #[rustfmt::skip]
    let m = Matrix6x3::new(
        omc / n2,              2.0 * xms / n2,                   0.0,
        -2.0 * xms / n2,       (4.0 * omc - 1.5 * x * x) / n2,  0.0,
        0.0,                   0.0,                              omc / n2,
        s / n,                 2.0 * omc / n,                    0.0,
        -2.0 * omc / n,        (4.0 * s - 3.0 * x) / n,         0.0,
        0.0,                   0.0,                              s / n,
    );
    m
}

/// Discrete affine step `x⁺ = A x + B u + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteStep {
    pub a: Matrix6<f64>,
    pub b: Matrix6x3<f64>,
    pub c: Vector6<f64>,
}

/// Circular leader orbit used as the relative-motion reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderOrbit {
    pub mu: f64,
    pub radius: f64,
    pub eccentricity: f64,
}

/// Eccentricity above which the CW model is flagged as mismatched.
pub const ECCENTRICITY_TOLERANCE: f64 = 1e-3;

impl LeaderOrbit {
    pub fn mean_motion(&self) -> f64 {
        (self.mu / self.radius.powi(3)).sqrt()
    }
}

/// Per-node discretization plus a model-mismatch flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub steps: Vec<DiscreteStep>,
    pub model_mismatch: bool,
}

/// Exact ZOH discretization of the CW model for each interval of the
/// reference. With `residual` the affine terms `c_k` carry the nonlinear
/// one-step residual of the reference (states and held controls).
pub fn linearize_dynamics(
    orbit: &LeaderOrbit,
    dt: f64,
    reference: &[Vector6<f64>],
    controls: &[Vector3<f64>],
    residual: bool,
) -> Linearization {
    let n = orbit.mean_motion();
    let a = cw_stm(n, dt);
    let b = cw_input(n, dt);
    let intervals = reference.len().saturating_sub(1);
    let steps = (0..intervals)
        .map(|k| {
            let u = controls.get(k).copied().unwrap_or_else(Vector3::zeros);
            let c = if residual {
                nonlinear_step(orbit, &reference[k], &u, dt) - a * reference[k] - b * u
            } else {
                Vector6::zeros()
            };
            DiscreteStep { a, b, c }
        })
        .collect();
    Linearization {
        steps,
        model_mismatch: orbit.eccentricity > ECCENTRICITY_TOLERANCE,
    }
}

/// Relative acceleration in the rotating frame of a circular leader, exact
/// two-body.
pub fn nonlinear_rhs(orbit: &LeaderOrbit, x: &Vector6<f64>, u: &Vector3<f64>) -> Vector6<f64> {
    let n = orbit.mean_motion();
    let a = orbit.radius;
    let (px, py, pz) = (a + x[0], x[1], x[2]);
    let rho3 = (px * px + py * py + pz * pz).powf(1.5);
    let k = orbit.mu / rho3;
    Vector6::new(
        x[3],
        x[4],
        x[5],
        -k * px + orbit.mu / (a * a) + 2.0 * n * x[4] + n * n * x[0] + u.x,
        -k * py - 2.0 * n * x[3] + n * n * x[1] + u.y,
        -k * pz + u.z,
    )
}

/// Substeps per interval for the nonlinear RK4 rollout.
const SUBSTEP: f64 = 1.0;

/// RK4 rollout of the nonlinear relative dynamics over one interval.
pub fn nonlinear_step(orbit: &LeaderOrbit, x: &Vector6<f64>, u: &Vector3<f64>, dt: f64) -> Vector6<f64> {
    let m = (dt / SUBSTEP).ceil().max(1.0) as usize;
    let h = dt / m as f64;
    let mut x = *x;
    for _ in 0..m {
        let k1 = nonlinear_rhs(orbit, &x, u);
        let k2 = nonlinear_rhs(orbit, &(x + k1 * (h / 2.0)), u);
        let k3 = nonlinear_rhs(orbit, &(x + k2 * (h / 2.0)), u);
        let k4 = nonlinear_rhs(orbit, &(x + k3 * h), u);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Nonlinear trajectory from `x0` under held controls.
pub fn nonlinear_rollout(
    orbit: &LeaderOrbit,
    x0: &Vector6<f64>,
    controls: &[Vector3<f64>],
    dt: f64,
) -> Vec<Vector6<f64>> {
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(*x0);
    for u in controls {
        let next = nonlinear_step(orbit, out.last().unwrap(), u, dt);
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{MU_EARTH, R_EARTH};
    use approx::assert_relative_eq;
    use nalgebra::SMatrix;

    fn orbit() -> LeaderOrbit {
        LeaderOrbit {
            mu: MU_EARTH,
            radius: R_EARTH + 600e3,
            eccentricity: 0.0,
        }
    }

    fn expm_taylor<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
        // scaling and squaring with a long Taylor series
        let norm = m.abs().max() * D as f64;
        let s = norm.log2().ceil().max(0.0) as i32 + 4;
        let scaled = m / 2f64.powi(s);
        let mut term = SMatrix::<f64, D, D>::identity();
        let mut sum = term;
        for k in 1..30 {
            term = term * scaled / k as f64;
            sum += term;
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn equilibrium_stays_zero() {
        let l = linearize_dynamics(&orbit(), 30.0, &[Vector6::zeros(); 4], &[], false);
        for st in &l.steps {
            assert_eq!(
                st.a * Vector6::zeros() + st.b * Vector3::zeros() + st.c,
                Vector6::zeros()
            );
        }
        assert!(!l.model_mismatch);
        let ecc = LeaderOrbit {
            eccentricity: 0.01,
            ..orbit()
        };
        assert!(linearize_dynamics(&ecc, 30.0, &[Vector6::zeros(); 2], &[], false).model_mismatch);
    }

    #[test]
    fn along_track_offset_matches_closed_form() {
        // an along-track offset with zero relative velocity is a fixed point of CW
        let o = orbit();
        let n = o.mean_motion();
        let period = 2.0 * std::f64::consts::PI / n;
        let steps = 200;
        let dt = period / steps as f64;
        let a = cw_stm(n, dt);
        let mut x = Vector6::new(0.0, 1000.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..steps {
            x = a * x;
        }
        assert_relative_eq!(x, Vector6::new(0.0, 1000.0, 0.0, 0.0, 0.0, 0.0), epsilon = 1e-9);

        // general initial condition against the textbook CW solution
        let x0 = Vector6::new(100.0, 1000.0, -50.0, 0.02, -0.05, 0.01);
        let mut x = x0;
        for k in 1..=steps {
            x = a * x;
            let t = k as f64 * dt;
            let (s, c) = (n * t).sin_cos();
            let (x00, y00, z00, vx, vy, vz) = (x0[0], x0[1], x0[2], x0[3], x0[4], x0[5]);
            let xt = (4.0 - 3.0 * c) * x00 + s / n * vx + 2.0 / n * (1.0 - c) * vy;
            let yt = 6.0 * (s - n * t) * x00 + y00 - 2.0 / n * (1.0 - c) * vx + (4.0 * s - 3.0 * n * t) / n * vy;
            let zt = z00 * c + vz / n * s;
            assert_relative_eq!(x[0], xt, epsilon = 1e-9);
            assert_relative_eq!(x[1], yt, epsilon = 1e-9);
            assert_relative_eq!(x[2], zt, epsilon = 1e-9);
        }
    }

    #[test]
    fn discretization_matches_matrix_exponential() {
        let n = orbit().mean_motion();
        for dt in [1.0, 30.0, 600.0] {
            let mut aug = SMatrix::<f64, 9, 9>::zeros();
            aug.fixed_view_mut::<6, 6>(0, 0).copy_from(&(cw_matrix(n) * dt));
            aug.fixed_view_mut::<3, 3>(3, 6).copy_from(&(Matrix3::identity() * dt));
            let e = expm_taylor(&aug);
            let phi = e.fixed_view::<6, 6>(0, 0).into_owned();
            let gamma = e.fixed_view::<6, 3>(0, 6).into_owned();
            assert_relative_eq!(cw_stm(n, dt), phi, epsilon = 1e-9, max_relative = 1e-10);
            assert_relative_eq!(cw_input(n, dt), gamma, epsilon = 1e-9, max_relative = 1e-10);
        }
    }

    #[test]
    fn small_step_taylor_limit() {
        let n = orbit().mean_motion();
        let dt = 1e-3;
        let a = cw_matrix(n);
        let first = Matrix6::identity() + a * dt;
        let diff = cw_stm(n, dt) - first;
        assert!(diff.abs().max() < (a.norm() * dt).powi(2));
        let b = cw_input(n, dt);
        assert_relative_eq!(b[(3, 0)], dt, max_relative = 1e-6);
        assert_relative_eq!(b[(0, 0)], dt * dt / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn nonlinear_agrees_with_cw_at_small_scale() {
        let o = orbit();
        let x0 = Vector6::new(1.0, -2.0, 0.5, 1e-3, 2e-3, -1e-3);
        let u = Vector3::new(1e-6, 0.0, -1e-6);
        let dt = 60.0;
        let lin = cw_stm(o.mean_motion(), dt) * x0 + cw_input(o.mean_motion(), dt) * u;
        let nl = nonlinear_step(&o, &x0, &u, dt);
        assert!((lin - nl).fixed_rows::<3>(0).norm() < 1e-8);
        // residual term reproduces the nonlinear step exactly
        let l = linearize_dynamics(&o, dt, &[x0, Vector6::zeros()], &[u], true);
        let st = l.steps[0];
        assert_relative_eq!(st.a * x0 + st.b * u + st.c, nl, epsilon = 1e-12);
    }
}
