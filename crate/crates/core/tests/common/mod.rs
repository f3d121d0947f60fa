//! Independent oracles shared by the optimizer and acceptance suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector6};
use nalgebra_sparse::CsrMatrix;
use orbitfacet::constants::{MU_EARTH, R_EARTH};
use orbitfacet::trajopt::{LeaderOrbit, QpProblem, TranscriptionProblem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn leader() -> LeaderOrbit {
    LeaderOrbit {
        mu: MU_EARTH,
        radius: R_EARTH + 600e3,
        eccentricity: 0.0,
    }
}

pub struct Dense {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub e: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl Dense {
    pub fn to_qp(&self) -> QpProblem {
        let (m_eq, m_in, n) = (self.e.nrows(), self.g.nrows(), self.p.nrows());
        let mut a = DMatrix::zeros(m_eq + m_in, n);
        a.view_mut((0, 0), (m_eq, n)).copy_from(&self.e);
        a.view_mut((m_eq, 0), (m_in, n)).copy_from(&self.g);
        let mut l = DVector::from_element(m_eq + m_in, f64::NEG_INFINITY);
        let mut u = DVector::zeros(m_eq + m_in);
        l.rows_mut(0, m_eq).copy_from(&self.b);
        u.rows_mut(0, m_eq).copy_from(&self.b);
        u.rows_mut(m_eq, m_in).copy_from(&self.h);
        QpProblem {
            p: self.p.clone(),
            q: self.q.clone(),
            a: CsrMatrix::from(&a),
            l,
            u,
            balls: vec![],
        }
    }
}

pub fn random_qp(rng: &mut ChaCha8Rng) -> Dense {
    let n = rng.random_range(2..=20);
    let m_eq = rng.random_range(0..=2.min(n - 1));
    let m_in = rng.random_range(1..=10);
    let mut gen = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let mh = gen(n, n);
    let p = mh.transpose() * &mh + DMatrix::identity(n, n) * 0.05;
    let q = gen(n, 1).column(0).into_owned() * 3.0;
    let e = gen(m_eq, n);
    let g = gen(m_in, n);
    let x_feas = gen(n, 1).column(0).into_owned();
    let b = &e * &x_feas;
    let slack = gen(m_in, 1).column(0).map(|v: f64| v.abs() * 0.5);
    let h = &g * &x_feas + slack;
    Dense { p, q, e, b, g, h }
}

/// Minimum over all active sets that satisfy primal and dual feasibility.
pub fn enumerate_active_sets(d: &Dense) -> f64 {
    let n = d.p.nrows();
    let m_eq = d.e.nrows();
    let m_in = d.g.nrows();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m_in) {
        let act: Vec<usize> = (0..m_in).filter(|i| mask & (1 << i) != 0).collect();
        let k = m_eq + act.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&d.p);
        rhs.rows_mut(0, n).copy_from(&(-&d.q));
        for r in 0..m_eq {
            for j in 0..n {
                kkt[(n + r, j)] = d.e[(r, j)];
                kkt[(j, n + r)] = d.e[(r, j)];
            }
            rhs[n + r] = d.b[r];
        }
        for (r, &i) in act.iter().enumerate() {
            for j in 0..n {
                kkt[(n + m_eq + r, j)] = d.g[(i, j)];
                kkt[(j, n + m_eq + r)] = d.g[(i, j)];
            }
            rhs[n + m_eq + r] = d.h[i];
        }
        let Some(sol) = kkt.full_piv_lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let primal = (&d.g * &x - &d.h).max() <= 1e-9 && (&d.e * &x - &d.b).amax() <= 1e-9;
        // stationarity P x + q + Eᵀν + Gᵀλ = 0 with λ ≥ 0 on the active rows
        let dual = (0..act.len()).all(|r| sol[n + m_eq + r] >= -1e-9);
        if primal && dual {
            best = best.min(0.5 * x.dot(&(&d.p * &x)) + d.q.dot(&x));
        }
    }
    best
}

pub fn cw_by_hand(n: f64) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    a[(0, 3)] = 1.0;
    a[(1, 4)] = 1.0;
    a[(2, 5)] = 1.0;
    a[(3, 0)] = 3.0 * n * n;
    a[(3, 4)] = 2.0 * n;
    a[(4, 3)] = -2.0 * n;
    a[(5, 2)] = -n * n;
    a
}

pub fn expm(m: &Matrix6<f64>) -> Matrix6<f64> {
    let s = (m.norm().log2().ceil().max(0.0) as i32) + 3;
    let scaled = m / 2f64.powi(s);
    let mut term = Matrix6::identity();
    let mut sum = term;
    for k in 1..25 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

/// Minimum-energy cost `dᵀ W⁻¹ d` of the continuous system, Simpson quadrature.
pub fn gramian_cost(n: f64, t: f64, x0: &Vector6<f64>, xf: &Vector6<f64>) -> f64 {
    let a = cw_by_hand(n);
    let mut b = Matrix6x3::zeros();
    b.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());
    let steps = 2000;
    let h = t / steps as f64;
    let mut w = Matrix6::zeros();
    for i in 0..=steps {
        let phi = expm(&(a * (i as f64 * h)));
        let weight = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w += phi * b * b.transpose() * phi.transpose() * (weight * h / 3.0);
    }
    let d = xf - expm(&(a * t)) * x0;
    d.dot(&(w.try_inverse().unwrap() * d))
}

pub fn crossing_problem(u_max: f64, r_col: f64) -> TranscriptionProblem {
    let o = leader();
    let period = 2.0 * std::f64::consts::PI / o.mean_motion();
    let nodes = 100;
    let dt = 0.1 * period / (nodes - 1) as f64;
    let x0 = Vector6::new(150.0, -3000.0, 40.0, 0.0, 0.0, 0.0);
    let xf = Vector6::new(150.0, 3000.0, 40.0, 0.0, 0.0, 0.0);
    TranscriptionProblem::new(nodes, dt, x0, xf, u_max, r_col)
}
