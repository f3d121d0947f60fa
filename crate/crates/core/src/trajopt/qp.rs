//! Operator-splitting (ADMM) solver for convex quadratic programs
//!
//! ```text
//! minimize ½ xᵀ P x + qᵀ x   subject to   A x ∈ C
//! ```
//!
//! where `C` is a product of intervals `[l_i, u_i]` and Euclidean balls over
//! consecutive row blocks. The iteration follows the OSQP splitting with Ruiz
//! equilibration, adaptive step size and an optional active-set polish.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::CsrMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Rows `start..start + dim` of `A x` must lie in a ball of `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallBlock {
    pub start: usize,
    pub dim: usize,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    /// Constraint matrix, stored by rows.
    pub a: CsrMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    /// Row blocks handled as balls; their `l`/`u` entries are ignored.
    pub balls: Vec<BallBlock>,
}

impl QpProblem {
    pub fn unconstrained(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            p,
            q,
            a: CsrMatrix::zeros(0, n),
            l: DVector::zeros(0),
            u: DVector::zeros(0),
            balls: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    fn ball_rows(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.m()];
        for (b, blk) in self.balls.iter().enumerate() {
            for row in owner.iter_mut().skip(blk.start).take(blk.dim) {
                *row = Some(b);
            }
        }
        owner
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.p.shape() != (n, n) || self.a.ncols() != n || self.l.len() != self.m() || self.u.len() != self.m() {
            return Err(Error::config("QP dimensions are inconsistent"));
        }
        if self
            .p
            .iter()
            .chain(self.q.iter())
            .chain(self.a.values())
            .any(|v| !v.is_finite())
        {
            return Err(Error::config("QP data must be finite"));
        }
        let scale = self.p.amax().max(1.0);
        if (&self.p - self.p.transpose()).amax() > 1e-9 * scale {
            return Err(Error::config("QP Hessian is not symmetric"));
        }
        if n > 0 {
            let mut shifted = self.p.clone();
            for i in 0..n {
                shifted[(i, i)] += 1e-9 * scale;
            }
            if Cholesky::new(shifted).is_none() {
                return Err(Error::config("QP Hessian is not positive semidefinite"));
            }
        }
        self.check_bounds()
    }

    fn check_bounds(&self) -> Result<()> {
        let owner = self.ball_rows();
        for blk in &self.balls {
            if blk.start + blk.dim > self.m() || !(blk.radius >= 0.0) || !blk.radius.is_finite() {
                return Err(Error::config("invalid ball block"));
            }
        }
        for i in 0..self.m() {
            if owner[i].is_none() && (self.l[i] > self.u[i] || self.l[i].is_nan() || self.u[i].is_nan()) {
                return Err(Error::config(format!("QP row {i} has empty bounds")));
            }
        }
        Ok(())
    }

    /// Euclidean projection onto `C`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        project(v, &self.l, &self.u, &self.balls)
    }
}

fn project(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>, balls: &[BallBlock]) -> DVector<f64> {
    let mut z = v.clone();
    for i in 0..z.len() {
        z[i] = z[i].max(l[i]).min(u[i]);
    }
    for b in balls {
        let mut seg = z.rows_mut(b.start, b.dim);
        seg.copy_from(&v.rows(b.start, b.dim));
        let norm = seg.norm();
        if norm > b.radius {
            seg *= b.radius / norm;
        }
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub check_every: usize,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            eps_infeasible: 1e-7,
            max_iter: 40_000,
            check_every: 10,
            scaling_iters: 15,
            adaptive_rho: true,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    MaxIterations,
    PrimalInfeasible,
}

#[derive(Debug, Clone, Serialize)]
pub struct QpReport {
    pub status: QpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub polished: bool,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers, positive on upper bounds.
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub report: QpReport,
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;

struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: CsrMatrix<f64>,
    at: CsrMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    balls: Vec<BallBlock>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

fn spmv(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let (offsets, cols, vals) = (a.row_offsets(), a.col_indices(), a.values());
    let x = x.as_slice();
    DVector::from_fn(a.nrows(), |i, _| {
        let (lo, hi) = (offsets[i], offsets[i + 1]);
        cols[lo..hi].iter().zip(&vals[lo..hi]).map(|(&j, &v)| v * x[j]).sum()
    })
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn equilibrate(prob: &QpProblem, iters: usize) -> Scaled {
    let (n, m) = (prob.n(), prob.m());
    let mut p = prob.p.clone();
    let mut q = prob.q.clone();
    let mut a = prob.a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut c = 1.0;
    let owner = prob.ball_rows();
    let clamp = |s: f64| {
        if s == 0.0 || !s.is_finite() {
            1.0
        } else {
            s.clamp(1e-4, 1e4)
        }
    };
    for _ in 0..iters {
        let mut col_max: Vec<f64> = (0..n).map(|j| p.column(j).amax()).collect();
        let mut row_max = vec![0.0f64; m];
        for (i, row) in a.row_iter().enumerate() {
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                col_max[j] = col_max[j].max(v.abs());
                row_max[i] = row_max[i].max(v.abs());
            }
        }
        let dd = DVector::from_fn(n, |j, _| clamp(1.0 / col_max[j].sqrt()));
        let mut ee = DVector::from_fn(m, |i, _| clamp(1.0 / row_max[i].sqrt()));
        for blk in &prob.balls {
            let worst = row_max[blk.start..blk.start + blk.dim]
                .iter()
                .copied()
                .fold(0.0, f64::max);
            let s = clamp(1.0 / worst.sqrt());
            for i in blk.start..blk.start + blk.dim {
                ee[i] = s;
            }
        }
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            q[j] *= dd[j];
        }
        for (i, mut row) in a.row_iter_mut().enumerate() {
            let (cols, vals) = row.cols_and_values_mut();
            for (&j, v) in cols.iter().zip(vals.iter_mut()) {
                *v *= ee[i] * dd[j];
            }
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&ee);
        let mean_col = if n > 0 {
            (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64
        } else {
            0.0
        };
        let g = clamp(1.0 / mean_col.max(q.amax()));
        p *= g;
        q *= g;
        c *= g;
    }
    let mut l = prob.l.clone();
    let mut u = prob.u.clone();
    for i in 0..m {
        if owner[i].is_none() {
            l[i] *= e[i];
            u[i] *= e[i];
        }
    }
    let balls = prob
        .balls
        .iter()
        .map(|b| BallBlock {
            radius: b.radius * e[b.start],
            ..*b
        })
        .collect();
    let at = a.transpose();
    Scaled {
        p,
        q,
        a,
        at,
        l,
        u,
        balls,
        d,
        e,
        c,
    }
}

fn rho_vector(s: &Scaled, rho: f64, owner: &[Option<usize>]) -> DVector<f64> {
    DVector::from_fn(s.l.len(), |i, _| {
        if owner[i].is_some() {
            rho
        } else if s.l[i] == f64::NEG_INFINITY && s.u[i] == f64::INFINITY {
            RHO_MIN
        } else if s.l[i] == s.u[i] {
            (RHO_EQ_FACTOR * rho).min(RHO_MAX)
        } else {
            rho
        }
    })
}

fn factor(s: &Scaled, sigma: f64, rho: &DVector<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = s.p.nrows();
    let mut k = s.p.clone();
    for i in 0..n {
        k[(i, i)] += sigma;
    }
    for (r, row) in s.a.row_iter().enumerate() {
        let (idx, val) = (row.col_indices(), row.values());
        for (a, &i) in idx.iter().enumerate() {
            let vi = rho[r] * val[a];
            for (b, &j) in idx.iter().enumerate() {
                k[(i, j)] += vi * val[b];
            }
        }
    }
    Cholesky::new(k).ok_or(Error::NotConverged("QP linear system is not positive definite".into()))
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    prim_rel: f64,
    dual_rel: f64,
}

impl Residuals {
    fn new(
        ax: &DVector<f64>,
        z: &DVector<f64>,
        px: &DVector<f64>,
        aty: &DVector<f64>,
        q: &DVector<f64>,
        st: &QpSettings,
    ) -> Self {
        let prim = inf_norm(&(ax - z));
        let dual = inf_norm(&(px + q + aty));
        let prim_scale = inf_norm(ax).max(inf_norm(z));
        let dual_scale = inf_norm(px).max(inf_norm(aty)).max(inf_norm(q));
        Residuals {
            prim,
            dual,
            eps_prim: st.eps_abs + st.eps_rel * prim_scale,
            eps_dual: st.eps_abs + st.eps_rel * dual_scale,
            prim_rel: prim / prim_scale.max(1e-30),
            dual_rel: dual / dual_scale.max(1e-30),
        }
    }

    fn ok(&self) -> bool {
        self.prim <= self.eps_prim && self.dual <= self.eps_dual
    }
}

/// Largest complementarity product over the constraint rows.
pub fn complementarity(prob: &QpProblem, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let ax = spmv(&prob.a, x);
    let owner = prob.ball_rows();
    let mut worst: f64 = 0.0;
    for i in 0..prob.m() {
        if owner[i].is_some() {
            continue;
        }
        let gap = if y[i] > 0.0 {
            (prob.u[i] - ax[i]).abs()
        } else if y[i] < 0.0 {
            (ax[i] - prob.l[i]).abs()
        } else {
            0.0
        };
        if gap.is_finite() {
            worst = worst.max(gap * y[i].abs());
        }
    }
    for b in &prob.balls {
        let yb = y.rows(b.start, b.dim);
        let zb = ax.rows(b.start, b.dim);
        worst = worst.max((b.radius * yb.norm() - yb.dot(&zb)).abs());
    }
    worst
}

fn infeasibility_certificate(
    prob: &QpProblem,
    at: &CsrMatrix<f64>,
    dy: &DVector<f64>,
    owner: &[Option<usize>],
    eps: f64,
) -> bool {
    let norm = inf_norm(dy);
    if norm < 1e-30 {
        return false;
    }
    let dy = dy / norm;
    if inf_norm(&spmv(at, &dy)) > eps {
        return false;
    }
    let mut support = 0.0;
    for i in 0..prob.m() {
        if owner[i].is_some() {
            continue;
        }
        if dy[i] > 0.0 {
            support += prob.u[i] * dy[i];
        } else if dy[i] < 0.0 {
            support += prob.l[i] * dy[i];
        }
        if !support.is_finite() {
            return false;
        }
    }
    for b in &prob.balls {
        support += b.radius * dy.rows(b.start, b.dim).norm();
    }
    support < -eps
}

pub fn solve_qp(prob: &QpProblem, st: &QpSettings) -> Result<QpSolution> {
    solve_qp_warm(prob, st, None)
}

/// As [`solve_qp`], starting from a previous primal/dual pair of a problem
/// with the same dimensions.
pub fn solve_qp_warm(prob: &QpProblem, st: &QpSettings, warm: Option<&QpSolution>) -> Result<QpSolution> {
    QpWorkspace::new(prob.clone(), st)?.solve(warm)
}

/// Residual factor below which a ball polish is attempted.
const BALL_POLISH_TRIGGER: f64 = 1e4;

/// Guessed active set: a side per row (`0` free, `2` equality, `-1` lower,
/// `1` upper) and a flag per ball.
#[derive(Debug, Clone, PartialEq)]
struct ActiveSet {
    rows: Vec<i8>,
    balls: Vec<bool>,
}

/// A validated, scaled and factored problem that can be re-solved after its
/// bounds change.
pub struct QpWorkspace {
    prob: QpProblem,
    st: QpSettings,
    owner: Vec<Option<usize>>,
    a: CsrMatrix<f64>,
    at: CsrMatrix<f64>,
    s: Scaled,
    rho: f64,
    rho_vec: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    pchol: Option<Cholesky<f64, Dyn>>,
}

impl QpWorkspace {
    pub fn new(prob: QpProblem, st: &QpSettings) -> Result<Self> {
        prob.validate()?;
        let owner = prob.ball_rows();
        let s = equilibrate(&prob, st.scaling_iters);
        let rho_vec = rho_vector(&s, st.rho, &owner);
        let chol = factor(&s, st.sigma, &rho_vec)?;
        let pchol = if st.polish && prob.balls.is_empty() {
            hessian_factor(&prob.p)
        } else {
            None
        };
        let a = prob.a.clone();
        let at = a.transpose();
        Ok(Self {
            prob,
            st: *st,
            owner,
            a,
            at,
            s,
            rho: st.rho,
            rho_vec,
            chol,
            pchol,
        })
    }

    pub fn problem(&self) -> &QpProblem {
        &self.prob
    }

    /// Replaces the row bounds and ball radii; `P`, `q` and `A` are kept.
    pub fn update_bounds(&mut self, l: DVector<f64>, u: DVector<f64>, radii: &[f64]) -> Result<()> {
        if l.len() != self.prob.m() || u.len() != self.prob.m() || radii.len() != self.prob.balls.len() {
            return Err(Error::config("bound update has the wrong dimensions"));
        }
        self.prob.l = l;
        self.prob.u = u;
        for (b, r) in self.prob.balls.iter_mut().zip(radii) {
            b.radius = *r;
        }
        self.prob.check_bounds()?;
        let e = &self.s.e;
        for i in 0..self.prob.m() {
            if self.owner[i].is_none() {
                self.s.l[i] = self.prob.l[i] * e[i];
                self.s.u[i] = self.prob.u[i] * e[i];
            }
        }
        for (sb, b) in self.s.balls.iter_mut().zip(&self.prob.balls) {
            sb.radius = b.radius * e[b.start];
        }
        let rho_vec = rho_vector(&self.s, self.rho, &self.owner);
        if rho_vec != self.rho_vec {
            self.rho_vec = rho_vec;
            self.chol = factor(&self.s, self.st.sigma, &self.rho_vec)?;
        }
        Ok(())
    }

    fn residuals(&self, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> Residuals {
        let ax = spmv(&self.a, x);
        let px = &self.prob.p * x;
        let aty = spmv(&self.at, y);
        Residuals::new(&ax, z, &px, &aty, &self.prob.q, &self.st)
    }

    /// Residuals of the unscaled problem evaluated from scaled iterates.
    fn scaled_residuals(&self, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> Residuals {
        let s = &self.s;
        let ax = spmv(&s.a, x).component_div(&s.e);
        let zu = z.component_div(&s.e);
        let px = (&s.p * x).component_div(&s.d) / s.c;
        let aty = spmv(&s.at, y).component_div(&s.d) / s.c;
        let q = s.q.component_div(&s.d) / s.c;
        Residuals::new(&ax, &zu, &px, &aty, &q, &self.st)
    }

    fn unscale(
        &self,
        x: &DVector<f64>,
        z: &DVector<f64>,
        y: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let s = &self.s;
        (
            x.component_mul(&s.d),
            z.component_div(&s.e),
            y.component_mul(&s.e) / s.c,
        )
    }

    fn active_set(&self, z: &DVector<f64>, y: &DVector<f64>) -> ActiveSet {
        let prob = &self.prob;
        let rows = (0..prob.m())
            .map(|i| {
                if self.owner[i].is_some() {
                    0
                } else if prob.l[i] == prob.u[i] {
                    2
                } else if z[i] - prob.l[i] < -y[i] {
                    -1
                } else if prob.u[i] - z[i] < y[i] {
                    1
                } else {
                    0
                }
            })
            .collect();
        let balls = prob
            .balls
            .iter()
            .map(|b| {
                let zb = z.rows(b.start, b.dim);
                zb.norm() >= b.radius * (1.0 - 1e-6) && y.rows(b.start, b.dim).dot(&zb) > 0.0
            })
            .collect();
        ActiveSet { rows, balls }
    }

    /// Polished iterate if it meets the tolerances.
    fn try_polish(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        active: &ActiveSet,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, Residuals)> {
        let (xp, yp) = if self.prob.balls.is_empty() {
            polish(&self.prob, self.pchol.as_ref(), &active.rows)?
        } else {
            self.polish_balls(x, y, active)?
        };
        let zp = self.prob.project(&spmv(&self.a, &xp));
        let rp = self.residuals(&xp, &zp, &yp);
        rp.ok().then_some((xp, zp, yp, rp))
    }

    pub fn solve(&mut self, warm: Option<&QpSolution>) -> Result<QpSolution> {
        let (n, m) = (self.prob.n(), self.prob.m());
        let st = self.st;
        let (mut x, mut z, mut y) = match warm {
            Some(w) if w.x.len() == n && w.y.len() == m => (
                w.x.component_div(&self.s.d),
                project(&w.z.component_mul(&self.s.e), &self.s.l, &self.s.u, &self.s.balls),
                w.y.component_div(&self.s.e) * self.s.c,
            ),
            _ => (DVector::zeros(n), DVector::zeros(m), DVector::zeros(m)),
        };

        let has_balls = !self.prob.balls.is_empty();
        let mut last_active: Option<ActiveSet> = None;
        let mut last_polish = 0;
        let mut polished = None;
        let mut status = QpStatus::MaxIterations;
        let mut iterations = st.max_iter;
        for k in 1..=st.max_iter {
            let s = &self.s;
            let y_prev = y.clone();
            let mut x_tilde = &x * st.sigma - &s.q + spmv(&s.at, &(self.rho_vec.component_mul(&z) - &y));
            self.chol.solve_mut(&mut x_tilde);
            let z_tilde = spmv(&s.a, &x_tilde);
            let x_next = &x_tilde * st.alpha + &x * (1.0 - st.alpha);
            let z_relax = &z_tilde * st.alpha + &z * (1.0 - st.alpha);
            let z_next = project(&(&z_relax + y.component_div(&self.rho_vec)), &s.l, &s.u, &s.balls);
            y += self.rho_vec.component_mul(&(&z_relax - &z_next));
            x = x_next;
            z = z_next;

            if k % st.check_every != 0 && k != st.max_iter {
                continue;
            }
            let r = self.scaled_residuals(&x, &z, &y);
            if r.ok() {
                status = QpStatus::Solved;
                iterations = k;
                break;
            }
            let near = !has_balls
                || (r.prim <= BALL_POLISH_TRIGGER * r.eps_prim && r.dual <= BALL_POLISH_TRIGGER * r.eps_dual);
            if st.polish && near {
                let (xu, zu, yu) = self.unscale(&x, &z, &y);
                let guess = self.active_set(&zu, &yu);
                let stale = has_balls && k - last_polish >= 20 * st.check_every;
                if last_active.as_ref() != Some(&guess) || stale {
                    last_polish = k;
                    if let Some(p) = self.try_polish(&xu, &yu, &guess) {
                        polished = Some(p);
                        status = QpStatus::Solved;
                        iterations = k;
                        break;
                    }
                }
                last_active = Some(guess);
            }
            let dy = (&y - &y_prev).component_mul(&self.s.e) / self.s.c;
            if infeasibility_certificate(&self.prob, &self.at, &dy, &self.owner, st.eps_infeasible) {
                status = QpStatus::PrimalInfeasible;
                iterations = k;
                break;
            }
            if st.adaptive_rho && m > 0 {
                let ratio = (r.prim_rel / r.dual_rel.max(1e-30)).sqrt();
                let new_rho = (self.rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho {
                    self.rho = new_rho;
                    self.rho_vec = rho_vector(&self.s, self.rho, &self.owner);
                    self.chol = factor(&self.s, st.sigma, &self.rho_vec)?;
                }
            }
        }

        let (xu, zu, yu, r, was_polished) = match polished {
            Some((xp, zp, yp, rp)) => (xp, zp, yp, rp, true),
            None => {
                let (xu, zu, yu) = self.unscale(&x, &z, &y);
                let r = self.residuals(&xu, &zu, &yu);
                let better = (st.polish && status == QpStatus::Solved)
                    .then(|| self.try_polish(&xu, &yu, &self.active_set(&zu, &yu)))
                    .flatten();
                match better {
                    Some((xp, zp, yp, rp)) => (xp, zp, yp, rp, true),
                    None => (xu, zu, yu, r, false),
                }
            }
        };
        let report = QpReport {
            status,
            iterations,
            objective: self.prob.objective(&xu),
            primal_residual: r.prim,
            dual_residual: r.dual,
            complementarity: complementarity(&self.prob, &xu, &yu),
            polished: was_polished,
        };
        Ok(QpSolution {
            x: xu,
            y: yu,
            z: zu,
            report,
        })
    }

    /// Newton iteration on the active rows and the active balls, the latter
    /// written as `½(‖A_b x‖² − r²) = 0`.
    fn polish_balls(
        &self,
        x0: &DVector<f64>,
        y0: &DVector<f64>,
        active: &ActiveSet,
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        let prob = &self.prob;
        let n = prob.n();
        let mut active = active.clone();
        for _ in 0..8 {
            let (rows, targets, sides) = split_active(prob, &active.rows);
            let blocks: Vec<BallBlock> = prob
                .balls
                .iter()
                .zip(&active.balls)
                .filter(|(_, &on)| on)
                .map(|(b, _)| *b)
                .collect();
            if blocks.iter().any(|b| b.radius <= 0.0) {
                return None;
            }
            let (na, nb) = (rows.len(), blocks.len());
            let b = DVector::from_vec(targets);
            if b.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let aa = dense_rows(&prob.a, &rows);
            let mut x = x0.clone();
            let mut nu = DVector::from_iterator(na, rows.iter().map(|&i| y0[i]));
            let mut mu = DVector::from_iterator(
                nb,
                blocks.iter().map(|blk| {
                    let zb = spmv_rows(&self.a, blk.start, blk.dim, x0);
                    (y0.rows(blk.start, blk.dim).dot(&zb) / blk.radius.powi(2)).max(0.0)
                }),
            );
            let size = n + na + nb;
            let scale = prob.p.amax().max(1.0);
            let mut done = false;
            for _ in 0..30 {
                let mut kkt = DMatrix::zeros(size, size);
                kkt.view_mut((0, 0), (n, n)).copy_from(&prob.p);
                let mut grad = &prob.p * &x + &prob.q + aa.tr_mul(&nu);
                let mut cons = DVector::zeros(nb);
                for (c, blk) in blocks.iter().enumerate() {
                    let w = spmv_rows(&self.a, blk.start, blk.dim, &x);
                    let mut gx = DVector::zeros(n);
                    for (r, i) in (blk.start..blk.start + blk.dim).enumerate() {
                        let row = self.a.row(i);
                        let (cols, vals) = (row.col_indices(), row.values());
                        for (&j, &v) in cols.iter().zip(vals) {
                            gx[j] += v * w[r];
                            for (&j2, &v2) in cols.iter().zip(vals) {
                                kkt[(j, j2)] += mu[c] * v * v2;
                            }
                        }
                    }
                    grad += &gx * mu[c];
                    for j in 0..n {
                        kkt[(j, n + na + c)] = gx[j];
                        kkt[(n + na + c, j)] = gx[j];
                    }
                    cons[c] = 0.5 * (w.norm_squared() - blk.radius.powi(2));
                }
                for r in 0..na {
                    for j in 0..n {
                        kkt[(n + r, j)] = aa[(r, j)];
                        kkt[(j, n + r)] = aa[(r, j)];
                    }
                }
                let prim = &aa * &x - &b;
                let mut rhs = DVector::zeros(size);
                rhs.rows_mut(0, n).copy_from(&(-&grad));
                rhs.rows_mut(n, na).copy_from(&(-&prim));
                rhs.rows_mut(n + na, nb).copy_from(&(-&cons));
                let mut reg = kkt.clone();
                for i in 0..n {
                    reg[(i, i)] += 1e-12 * scale;
                }
                let lu = reg.lu();
                let mut step = lu.solve(&rhs)?;
                step += lu.solve(&(&rhs - &kkt * &step))?;
                x += step.rows(0, n);
                nu += step.rows(n, na);
                mu += step.rows(n + na, nb);
                if inf_norm(&step.rows(0, n).into_owned()) <= 1e-14 * (1.0 + inf_norm(&x)) {
                    done = true;
                    break;
                }
            }
            if !done {
                return None;
            }
            let (mut yfull, wrong) = wrong_signs(&rows, &sides, &nu, prob.m());
            let mut wrong_balls = Vec::new();
            for (c, blk) in blocks.iter().enumerate() {
                if mu[c] < 0.0 {
                    wrong_balls.push(blk.start);
                }
                let w = spmv_rows(&self.a, blk.start, blk.dim, &x);
                yfull.rows_mut(blk.start, blk.dim).copy_from(&(w * mu[c]));
            }
            if wrong.is_empty() && wrong_balls.is_empty() {
                return Some((x, yfull));
            }
            for i in wrong {
                active.rows[i] = 0;
            }
            for (flag, blk) in active.balls.iter_mut().zip(&prob.balls) {
                if wrong_balls.contains(&blk.start) {
                    *flag = false;
                }
            }
        }
        None
    }
}

fn dense_rows(a: &CsrMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), a.ncols());
    for (r, &i) in rows.iter().enumerate() {
        let row = a.row(i);
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            out[(r, j)] = v;
        }
    }
    out
}

fn spmv_rows(a: &CsrMatrix<f64>, start: usize, dim: usize, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(dim, |r, _| {
        let row = a.row(start + r);
        row.col_indices()
            .iter()
            .zip(row.values())
            .map(|(&j, &v)| v * x[j])
            .sum()
    })
}

fn polish(prob: &QpProblem, pchol: Option<&Cholesky<f64, Dyn>>, active: &[i8]) -> Option<(DVector<f64>, DVector<f64>)> {
    let mut active = active.to_vec();
    for _ in 0..8 {
        let (x, y, wrong) = match pchol {
            Some(c) => polish_schur(prob, c, &active)?,
            None => polish_once(prob, &active)?,
        };
        if wrong.is_empty() {
            return Some((x, y));
        }
        for i in wrong {
            active[i] = 0;
        }
    }
    None
}

/// Cholesky factor of `P` when it is safely positive definite.
fn hessian_factor(p: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let c = Cholesky::new(p.clone())?;
    let diag = c.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    (lo > 1e-6 * hi).then_some(c)
}

fn split_active(prob: &QpProblem, active: &[i8]) -> (Vec<usize>, Vec<f64>, Vec<i8>) {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut sides = Vec::new();
    for (i, &side) in active.iter().enumerate() {
        if side == 0 {
            continue;
        }
        rows.push(i);
        targets.push(if side == 1 { prob.u[i] } else { prob.l[i] });
        sides.push(side);
    }
    (rows, targets, sides)
}

fn wrong_signs(rows: &[usize], sides: &[i8], mult: &DVector<f64>, m: usize) -> (DVector<f64>, Vec<usize>) {
    let mut yfull = DVector::zeros(m);
    let mut wrong = Vec::new();
    for (r, &i) in rows.iter().enumerate() {
        let v = mult[r];
        if (sides[r] == -1 && v > 0.0) || (sides[r] == 1 && v < 0.0) {
            wrong.push(i);
        }
        yfull[i] = v;
    }
    (yfull, wrong)
}

/// Active-set KKT solve through the Schur complement `A_a P⁻¹ A_aᵀ`.
fn polish_schur(
    prob: &QpProblem,
    pchol: &Cholesky<f64, Dyn>,
    active: &[i8],
) -> Option<(DVector<f64>, DVector<f64>, Vec<usize>)> {
    let (rows, targets, sides) = split_active(prob, active);
    let b = DVector::from_vec(targets);
    if b.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let na = rows.len();
    let aa = dense_rows(&prob.a, &rows);
    let mut w = aa.transpose();
    pchol.l_dirty().solve_lower_triangular_mut(&mut w);
    let mut schur = w.tr_mul(&w);
    let delta = 1e-12 * schur.diagonal().amax().max(1e-30);
    for i in 0..na {
        schur[(i, i)] += delta;
    }
    let sc = Cholesky::new(schur.clone())?;
    let solve = |rx: &DVector<f64>, rb: &DVector<f64>| {
        // P dx + Aᵀ dy = rx, A dx = rb
        let px = pchol.solve(rx);
        let dy = sc.solve(&(&aa * &px - rb));
        let dx = pchol.solve(&(rx - aa.tr_mul(&dy)));
        (dx, dy)
    };
    let (mut x, mut y) = solve(&(-&prob.q), &b);
    for _ in 0..3 {
        let rx = -&prob.q - &prob.p * &x - aa.tr_mul(&y);
        let rb = &b - &aa * &x;
        let (dx, dy) = solve(&rx, &rb);
        x += dx;
        y += dy;
    }
    let (yfull, wrong) = wrong_signs(&rows, &sides, &y, prob.m());
    Some((x, yfull, wrong))
}

/// Solves the KKT system of the guessed active set; also returns the
/// inequality rows whose multipliers have the wrong sign.
fn polish_once(prob: &QpProblem, active: &[i8]) -> Option<(DVector<f64>, DVector<f64>, Vec<usize>)> {
    let n = prob.n();
    let (rows, targets, sides) = split_active(prob, active);
    let na = rows.len();
    let delta = 1e-10
        * prob
            .p
            .amax()
            .max(prob.a.values().iter().fold(0.0, |m, v| m.max(v.abs())))
            .max(1e-30);
    let aa = dense_rows(&prob.a, &rows);
    let mut kkt = DMatrix::zeros(n + na, n + na);
    kkt.view_mut((0, 0), (n, n)).copy_from(&prob.p);
    for r in 0..na {
        for j in 0..n {
            kkt[(n + r, j)] = aa[(r, j)];
            kkt[(j, n + r)] = aa[(r, j)];
        }
    }
    let mut rhs = DVector::zeros(n + na);
    rhs.rows_mut(0, n).copy_from(&(-&prob.q));
    for (r, t) in targets.iter().enumerate() {
        rhs[n + r] = *t;
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut reg = kkt.clone();
    for i in 0..n {
        reg[(i, i)] += delta;
    }
    for i in n..n + na {
        reg[(i, i)] -= delta;
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..5 {
        let res = &rhs - &kkt * &sol;
        sol += lu.solve(&res)?;
    }
    let x = sol.rows(0, n).into_owned();
    let (yfull, wrong) = wrong_signs(&rows, &sides, &sol.rows(n, na).into_owned(), prob.m());
    Some((x, yfull, wrong))
}
