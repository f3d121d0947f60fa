//! Successive convexification for a single follower transfer.

use nalgebra::{DMatrix, DVector, Matrix6xX, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cw::{linearize_dynamics, nonlinear_step, LeaderOrbit, Linearization};
use nalgebra_sparse::CsrMatrix;

use super::qp::{BallBlock, QpProblem, QpSettings, QpSolution, QpStatus, QpWorkspace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlBound {
    /// 26-face polytope circumscribing the ball, tightened per node until the
    /// exact norm holds.
    #[default]
    Polytope,
    /// Second-order ball handled directly by the QP projection.
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `Σ ‖u_k‖² dt`
    #[default]
    Energy,
    /// `Σ √(‖u_k‖² + ε²) dt`
    Fuel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsModel {
    /// Pure CW.
    Linear,
    /// CW plus the nonlinear one-step residual of the current reference.
    #[default]
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScpSettings {
    pub max_iter: usize,
    /// Largest node position change between accepted iterates, m.
    pub tol: f64,
    /// Largest one-step dynamics defect and terminal miss, m.
    pub defect_tol: f64,
    /// Initial trust radius, m; defaults to the transfer length scale.
    pub trust_radius: Option<f64>,
    pub min_trust_radius: f64,
    /// Relative merit decrease treated as stagnation.
    pub stagnation: f64,
    pub qp_eps: f64,
    pub qp_max_iter: usize,
}

impl Default for ScpSettings {
    fn default() -> Self {
        Self {
            max_iter: 60,
            tol: 1e-2,
            defect_tol: 1e-2,
            trust_radius: None,
            min_trust_radius: 1e-4,
            stagnation: 1e-7,
            qp_eps: 1e-9,
            qp_max_iter: 40_000,
        }
    }
}

fn default_nodes() -> usize {
    100
}

fn default_weight() -> f64 {
    1.0
}

fn default_smoothing() -> f64 {
    1e-7
}

/// Transfer of one follower relative to the leader, LVLH coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptionProblem {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Node spacing, s.
    pub dt: f64,
    /// Initial relative state `[x, y, z, vx, vy, vz]`.
    pub x0: [f64; 6],
    pub xf: [f64; 6],
    /// Acceleration bound, m/s².
    pub u_max: f64,
    /// Keep-out radius about the leader, m.
    #[serde(default)]
    pub r_col: f64,
    /// Leader position per node in the relative frame; origin when absent.
    #[serde(default)]
    pub leader_path: Option<Vec<[f64; 3]>>,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default)]
    pub cost: CostKind,
    /// Smoothing ε of the fuel proxy, m/s².
    #[serde(default = "default_smoothing")]
    pub fuel_smoothing: f64,
    #[serde(default)]
    pub bound: ControlBound,
    #[serde(default)]
    pub dynamics: DynamicsModel,
    #[serde(default)]
    pub scp: ScpSettings,
}

impl TranscriptionProblem {
    pub fn new(nodes: usize, dt: f64, x0: Vector6<f64>, xf: Vector6<f64>, u_max: f64, r_col: f64) -> Self {
        Self {
            nodes,
            dt,
            x0: x0.into(),
            xf: xf.into(),
            u_max,
            r_col,
            leader_path: None,
            weight: 1.0,
            cost: CostKind::Energy,
            fuel_smoothing: default_smoothing(),
            bound: ControlBound::Polytope,
            dynamics: DynamicsModel::Corrected,
            scp: ScpSettings::default(),
        }
    }

    pub fn x0(&self) -> Vector6<f64> {
        Vector6::from(self.x0)
    }

    pub fn xf(&self) -> Vector6<f64> {
        Vector6::from(self.xf)
    }

    pub fn leader_at(&self, k: usize) -> Vector3<f64> {
        self.leader_path
            .as_ref()
            .map(|p| Vector3::from(p[k]))
            .unwrap_or_else(Vector3::zeros)
    }

    pub fn duration(&self) -> f64 {
        (self.nodes - 1) as f64 * self.dt
    }

    fn length_scale(&self) -> f64 {
        let d = (self.x0().fixed_rows::<3>(0) - self.xf().fixed_rows::<3>(0)).norm();
        d.max(self.r_col).max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::config("trajectory needs at least two nodes"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("node spacing must be positive"));
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(Error::config("u_max must be positive"));
        }
        if !(self.r_col >= 0.0 && self.r_col.is_finite()) {
            return Err(Error::config("r_col must be non-negative"));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::config("cost weight must be positive"));
        }
        if self.cost == CostKind::Fuel && !(self.fuel_smoothing > 0.0) {
            return Err(Error::config("fuel smoothing must be positive"));
        }
        if self.x0.iter().chain(self.xf.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config("boundary states must be finite"));
        }
        if let Some(p) = &self.leader_path {
            if p.len() != self.nodes {
                return Err(Error::config("leader path length must equal the node count"));
            }
        }
        for (k, x) in [(0, self.x0()), (self.nodes - 1, self.xf())] {
            if (x.fixed_rows::<3>(0) - self.leader_at(k)).norm() < self.r_col {
                return Err(Error::config(format!(
                    "boundary node {k} lies inside the keep-out sphere"
                )));
            }
        }
        Ok(())
    }

    /// Objective value of a control sequence.
    pub fn cost_of(&self, controls: &[Vector3<f64>]) -> f64 {
        let eps2 = self.fuel_smoothing * self.fuel_smoothing;
        let s: f64 = controls
            .iter()
            .map(|u| match self.cost {
                CostKind::Energy => u.norm_squared(),
                CostKind::Fuel => (u.norm_squared() + eps2).sqrt(),
            })
            .sum();
        self.weight * s * self.dt
    }
}

/// Unit normals of the 26-face polytope.
pub fn polytope_normals() -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(26);
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if (i, j, k) != (0, 0, 0) {
                    out.push(Vector3::new(i as f64, j as f64, k as f64).normalize());
                }
            }
        }
    }
    out
}

/// Convex subproblem over the stacked controls together with the affine map
/// from controls to node states.
#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub qp: QpProblem,
    /// `x_k = maps[k].0 · u + maps[k].1`
    pub maps: Vec<(Matrix6xX<f64>, Vector6<f64>)>,
    pub collision_rows: usize,
    pub trust_radius: f64,
}

impl ConvexSubproblem {
    pub fn states(&self, u: &DVector<f64>) -> Vec<Vector6<f64>> {
        self.maps.iter().map(|(m, c)| m * u + c).collect()
    }
}

/// Reference about which the collision constraint and trust region are built.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub states: Vec<Vector6<f64>>,
    pub controls: Vec<Vector3<f64>>,
    /// Points whose directions from the leader define the collision
    /// half-spaces; the reference positions when absent.
    pub anchors: Option<Vec<Vector3<f64>>>,
}

impl Reference {
    /// Straight line between the boundary states, zero controls.
    pub fn straight_line(problem: &TranscriptionProblem) -> Self {
        let (a, b) = (problem.x0(), problem.xf());
        let n = problem.nodes;
        let dir = (b - a).fixed_rows::<3>(0).try_normalize(0.0).unwrap_or_else(Vector3::y);
        let side = Vector3::z().cross(&dir).try_normalize(1e-6).unwrap_or_else(Vector3::x);
        let clear = problem.r_col * 1.05;
        let states = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                let mut x = a * (1.0 - s) + b * s;
                if problem.r_col > 0.0 && k > 0 && k < n - 1 {
                    // skirt the keep-out sphere so neighbouring collision
                    // normals do not oppose each other
                    let leader = problem.leader_at(k);
                    let d = x.fixed_rows::<3>(0) - leader;
                    if d.norm() < clear {
                        let along = d.dot(&dir) * dir;
                        let perp = d - along;
                        let hat = perp.try_normalize(1e-6 * clear).unwrap_or(side);
                        let p = leader + along + hat * perp.norm().max(clear);
                        x.fixed_rows_mut::<3>(0).copy_from(&p);
                    }
                }
                x
            })
            .collect();
        Self {
            states,
            controls: vec![Vector3::zeros(); n - 1],
            anchors: None,
        }
    }
}

const COLLISION_MARGIN: f64 = 1e-7;

pub fn build_subproblem(
    problem: &TranscriptionProblem,
    reference: &Reference,
    lin: &Linearization,
    trust_radius: f64,
    bound_scale: &[f64],
    relax_terminal: Option<f64>,
) -> Result<ConvexSubproblem> {
    let nn = problem.nodes;
    let nu = 3 * (nn - 1);
    let dt = problem.dt;

    let mut maps = Vec::with_capacity(nn);
    let mut m = Matrix6xX::zeros(nu);
    let mut c = problem.x0();
    maps.push((m.clone(), c));
    for (k, st) in lin.steps.iter().enumerate() {
        m = st.a * &m;
        for i in 0..6 {
            for j in 0..3 {
                m[(i, 3 * k + j)] += st.b[(i, j)];
            }
        }
        c = st.a * c + st.c;
        maps.push((m.clone(), c));
    }

    let mut p = DMatrix::zeros(nu, nu);
    match problem.cost {
        CostKind::Energy => {
            for i in 0..nu {
                p[(i, i)] = 2.0 * problem.weight * dt;
            }
        }
        CostKind::Fuel => {
            let eps2 = problem.fuel_smoothing.powi(2);
            for (k, u) in reference.controls.iter().enumerate() {
                let s = (u.norm_squared() + eps2).sqrt();
                for j in 0..3 {
                    p[(3 * k + j, 3 * k + j)] = problem.weight * dt / s;
                }
            }
        }
    }
    let mut q = DVector::zeros(nu);

    // sparse rows: (column, value) pairs and bounds
    let mut rows: Vec<(Vec<(usize, f64)>, f64, f64)> = Vec::new();
    let dense = |r: Vec<f64>| r.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect::<Vec<_>>();
    let xf = problem.xf();
    let (m_end, c_end) = &maps[nn - 1];
    match relax_terminal {
        None => {
            for i in 0..6 {
                let target = xf[i] - c_end[i];
                rows.push((dense(m_end.row(i).iter().copied().collect()), target, target));
            }
        }
        Some(w) => {
            // soft terminal: w ‖M u + c − x_f‖²
            let r = c_end - xf;
            p += m_end.transpose() * m_end * (2.0 * w);
            q += m_end.transpose() * r * (2.0 * w);
        }
    }

    let mut balls = Vec::new();
    match problem.bound {
        ControlBound::Polytope => {
            let normals = polytope_normals();
            for k in 0..nn - 1 {
                for nrm in &normals {
                    let row = (0..3).map(|j| (3 * k + j, nrm[j])).filter(|(_, v)| *v != 0.0).collect();
                    rows.push((row, f64::NEG_INFINITY, problem.u_max * bound_scale[k]));
                }
            }
        }
        ControlBound::Ball => {
            for k in 0..nn - 1 {
                let start = rows.len();
                for j in 0..3 {
                    rows.push((vec![(3 * k + j, 1.0)], 0.0, 0.0));
                }
                balls.push(BallBlock {
                    start,
                    dim: 3,
                    radius: problem.u_max * bound_scale[k],
                });
            }
        }
    }

    let mut collision_rows = 0;
    if problem.r_col > 0.0 {
        for k in 1..nn - 1 {
            let leader = problem.leader_at(k);
            let at = |p: Vector3<f64>| {
                let d = p - leader;
                (d.norm() > 1e-9 * problem.length_scale()).then_some(d)
            };
            let own = reference.states[k].fixed_rows::<3>(0).into_owned();
            let Some(d) = reference.anchors.as_ref().and_then(|a| at(a[k])).or_else(|| at(own)) else {
                return Err(Error::InfeasibleReference { node: k });
            };
            let dist = d.norm();
            let nhat = d / dist;
            let (mk, ck) = &maps[k];
            let row: Vec<f64> = (0..nu).map(|j| (0..3).map(|i| nhat[i] * mk[(i, j)]).sum()).collect();
            let offset = nhat.dot(&(ck.fixed_rows::<3>(0) - leader));
            let lower = problem.r_col * (1.0 + COLLISION_MARGIN) - offset;
            rows.push((dense(row), lower, f64::INFINITY));
            collision_rows += 1;
        }
    }

    if trust_radius.is_finite() {
        // a control change of `du` held over the transfer moves a node by
        // up to ½ du T²
        let du = 2.0 * trust_radius / problem.duration().powi(2);
        for k in 0..nn - 1 {
            for i in 0..3 {
                let centre = reference.controls[k][i];
                rows.push((vec![(3 * k + i, 1.0)], centre - du, centre + du));
            }
        }
    }

    let mrows = rows.len();
    let mut offsets = Vec::with_capacity(mrows + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut l = DVector::zeros(mrows);
    let mut u = DVector::zeros(mrows);
    offsets.push(0);
    for (i, (row, lo, hi)) in rows.into_iter().enumerate() {
        for (j, v) in row {
            cols.push(j);
            vals.push(v);
        }
        offsets.push(cols.len());
        l[i] = lo;
        u[i] = hi;
    }
    let a = CsrMatrix::try_from_csr_data(mrows, nu, offsets, cols, vals)
        .map_err(|e| Error::NotConverged(format!("subproblem assembly: {e}")))?;
    Ok(ConvexSubproblem {
        qp: QpProblem { p, q, a, l, u, balls },
        maps,
        collision_rows,
        trust_radius,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub qp_iterations: usize,
    pub final_cost: f64,
    /// Largest one-step dynamics defect against the optimizer's model, m.
    pub max_defect: f64,
    /// Largest one-step defect against the nonlinear relative dynamics, m.
    pub max_nonlinear_defect: f64,
    pub max_constraint_violation: f64,
    pub terminal_miss: f64,
    pub min_separation: f64,
    pub max_control: f64,
    pub converged: bool,
    pub model_mismatch: bool,
    /// Merit of each accepted iterate.
    pub cost_history: Vec<f64>,
    /// One-step defect per interval, m.
    pub defect_profile: Vec<f64>,
    pub trust_radius: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ScpSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vector6<f64>>,
    pub controls: Vec<Vector3<f64>>,
    pub report: SolveReport,
}

fn unstack(u: &DVector<f64>) -> Vec<Vector3<f64>> {
    u.as_slice().chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

fn defect_length(d: &Vector6<f64>, dt: f64) -> f64 {
    d.fixed_rows::<3>(0).norm() + dt * d.fixed_rows::<3>(3).norm()
}

struct Candidate {
    states: Vec<Vector6<f64>>,
    controls: Vec<Vector3<f64>>,
    cost: f64,
    defects: Vec<f64>,
    nonlinear: Vec<f64>,
    terminal_miss: f64,
    min_separation: f64,
    collision_violation: f64,
    max_control: f64,
}

fn evaluate(
    problem: &TranscriptionProblem,
    orbit: &LeaderOrbit,
    states: Vec<Vector6<f64>>,
    controls: Vec<Vector3<f64>>,
) -> Candidate {
    let dt = problem.dt;
    let lin = linearize_dynamics(orbit, dt, &states, &controls, false);
    let mut defects = Vec::with_capacity(controls.len());
    let mut nonlinear = Vec::with_capacity(controls.len());
    for k in 0..controls.len() {
        let nl = nonlinear_step(orbit, &states[k], &controls[k], dt) - states[k + 1];
        let st = lin.steps[k];
        let cw = st.a * states[k] + st.b * controls[k] - states[k + 1];
        nonlinear.push(defect_length(&nl, dt));
        defects.push(match problem.dynamics {
            DynamicsModel::Linear => defect_length(&cw, dt),
            DynamicsModel::Corrected => defect_length(&nl, dt),
        });
    }
    let terminal_miss = defect_length(&(states[states.len() - 1] - problem.xf()), dt);
    let min_separation = states
        .iter()
        .enumerate()
        .map(|(k, x)| (x.fixed_rows::<3>(0) - problem.leader_at(k)).norm())
        .fold(f64::INFINITY, f64::min);
    Candidate {
        cost: problem.cost_of(&controls),
        max_control: controls.iter().map(|u| u.norm()).fold(0.0, f64::max),
        collision_violation: (problem.r_col - min_separation).max(0.0),
        states,
        controls,
        defects,
        nonlinear,
        terminal_miss,
        min_separation,
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Carried between subproblems: polytope scales and the last QP solution.
struct QpState {
    scale: Vec<f64>,
    warm: Option<QpSolution>,
    iterations: usize,
}

impl QpState {
    fn new(problem: &TranscriptionProblem) -> Self {
        Self {
            scale: vec![1.0; problem.nodes - 1],
            warm: None,
            iterations: 0,
        }
    }
}

/// Solve the subproblem, tightening the per-node polytope until every
/// control satisfies the exact norm bound.
fn solve_tightened(
    problem: &TranscriptionProblem,
    reference: &Reference,
    lin: &Linearization,
    trust: f64,
    relax: Option<f64>,
    state: &mut QpState,
) -> Result<Option<(ConvexSubproblem, DVector<f64>, DVector<f64>)>> {
    let scale = &mut state.scale;
    if let Some(w) = &state.warm {
        // loosen scales whose node fell inside the ball
        for (k, u) in unstack(&w.x).iter().enumerate() {
            let norm = u.norm();
            if scale[k] < 1.0 && norm < problem.u_max * (1.0 - 1e-9) {
                scale[k] = (scale[k] * problem.u_max / norm.max(1e-300)).min(1.0);
            }
        }
    }
    let settings = QpSettings {
        eps_abs: problem.scp.qp_eps,
        eps_rel: problem.scp.qp_eps,
        max_iter: problem.scp.qp_max_iter,
        ..Default::default()
    };
    let mut sub = build_subproblem(problem, reference, lin, trust, scale, relax)?;
    let mut ws = QpWorkspace::new(sub.qp.clone(), &settings)?;
    let mut warm = state.warm.take();
    for _ in 0..40 {
        let sol = ws.solve(warm.as_ref())?;
        state.iterations += sol.report.iterations;
        if sol.report.status != QpStatus::Solved {
            log::debug!(
                "subproblem {:?} after {} iterations",
                sol.report.status,
                sol.report.iterations
            );
            return Ok(None);
        }
        let us = unstack(&sol.x);
        let mut tightened = false;
        for (k, u) in us.iter().enumerate() {
            let norm = u.norm();
            if norm > problem.u_max * (1.0 + 1e-9) {
                scale[k] *= problem.u_max / norm * (1.0 - 1e-7);
                tightened = true;
            }
        }
        if !tightened {
            let out = (sub, sol.x.clone(), sol.y.clone());
            state.warm = Some(sol);
            return Ok(Some(out));
        }
        sub = build_subproblem(problem, reference, lin, trust, scale, relax)?;
        let radii: Vec<f64> = sub.qp.balls.iter().map(|b| b.radius).collect();
        ws.update_bounds(sub.qp.l.clone(), sub.qp.u.clone(), &radii)?;
        warm = Some(sol);
    }
    Ok(None)
}

/// Scale any control exceeding the bound back onto it.
fn enforce_bound(controls: &mut [Vector3<f64>], u_max: f64) {
    for u in controls.iter_mut() {
        let mut norm = u.norm();
        while norm > u_max {
            *u *= (u_max / norm) * (1.0 - 1e-15);
            norm = u.norm();
        }
    }
}

pub fn solve_scp(problem: &TranscriptionProblem, orbit: &LeaderOrbit) -> Result<ScpSolution> {
    problem.validate()?;
    let set = &problem.scp;
    let dt = problem.dt;
    let residual = problem.dynamics == DynamicsModel::Corrected;
    let scale_len = problem.length_scale();
    let times: Vec<f64> = (0..problem.nodes).map(|k| k as f64 * dt).collect();

    let mut reference = Reference::straight_line(problem);
    let mut lin = linearize_dynamics(orbit, dt, &reference.states, &reference.controls, false);
    let model_mismatch = lin.model_mismatch;
    let trust0 = set.trust_radius.unwrap_or(scale_len);
    let trust_max = 8.0 * trust0.max(scale_len);
    let mut trust = f64::INFINITY;
    let mut best: Option<Candidate> = None;
    let mut merit_best = f64::INFINITY;
    let mut penalty = 0.0;
    let mut history = Vec::new();
    let mut qp = QpState::new(problem);
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut message = String::from("iteration limit reached");

    for it in 0..set.max_iter {
        iterations = it + 1;
        let Some((sub, u, y)) = solve_tightened(problem, &reference, &lin, trust, None, &mut qp)? else {
            if best.is_none() {
                message = "subproblem infeasible from the initial reference".into();
                break;
            }
            if trust < trust_max {
                trust = (trust * 2.0).min(trust_max);
                continue;
            }
            message = "subproblem infeasible within the trust region".into();
            break;
        };
        let states = sub.states(&u);
        let cand = evaluate(problem, orbit, states, unstack(&u));
        let violation = cand.defects.iter().sum::<f64>() + cand.collision_violation + cand.terminal_miss;
        if best.is_none() {
            // exact penalty above the cost sensitivity to the terminal state
            let pos = y.rows(0, 3).amax();
            let vel = y.rows(3, 3).amax() / dt;
            penalty = 10.0 * pos.max(vel).max(cand.cost.max(1e-30) / scale_len);
        }
        let merit = cand.cost + penalty * violation;
        let step = best
            .as_ref()
            .map(|b| {
                b.states
                    .iter()
                    .zip(&cand.states)
                    .map(|(a, c)| (a - c).fixed_rows::<3>(0).norm())
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::INFINITY);
        let tolerance = 1e-12 * merit_best.abs().max(1e-30);
        let accept = merit <= merit_best + tolerance;
        if !accept {
            if reference.anchors.take().is_some() {
                continue;
            }
            trust *= 0.5;
            if trust < set.min_trust_radius {
                message = "trust region collapsed".into();
                break;
            }
            continue;
        }
        let improvement = (merit_best - merit) / merit_best.abs().max(1e-30);
        merit_best = merit;
        history.push(merit);
        let feasible = max_of(&cand.defects) < set.defect_tol
            && cand.terminal_miss < set.defect_tol
            && cand.collision_violation == 0.0;
        // the step shrinks geometrically near a sliding contact, so the
        // collision normals are taken at the extrapolated limit
        let ratio = step / last_step;
        let anchors = match &best {
            Some(b) if problem.r_col > 0.0 && ratio > 0.2 && ratio < 0.95 => {
                let gain = (ratio / (1.0 - ratio)).min(4.0);
                Some(
                    cand.states
                        .iter()
                        .zip(&b.states)
                        .map(|(c, p)| (c + (c - p) * gain).fixed_rows::<3>(0).into_owned())
                        .collect(),
                )
            }
            _ => None,
        };
        last_step = step;
        reference = Reference {
            states: cand.states.clone(),
            controls: cand.controls.clone(),
            anchors,
        };
        best = Some(cand);
        if feasible && step < set.tol {
            converged = true;
            message = "converged".into();
            break;
        }
        lin = linearize_dynamics(orbit, dt, &reference.states, &reference.controls, residual);
        if it == 0 {
            trust = trust0;
        } else if improvement < set.stagnation && !feasible {
            trust *= 0.5;
        } else if improvement < set.stagnation {
            // feasible but still moving: shrink to force the step below tol
            trust = (trust * 0.5).max(set.min_trust_radius);
        } else {
            trust = (trust * 2.0).min(trust_max);
        }
        if trust < set.min_trust_radius {
            message = "trust region collapsed".into();
            break;
        }
    }

    let (states, controls) = match best {
        Some(b) => (b.states, b.controls),
        None => {
            // least-violation transfer for diagnostics
            let lin0 = linearize_dynamics(orbit, dt, &reference.states, &reference.controls, false);
            let w = 1e3 * problem.weight * dt / scale_len.powi(2);
            match solve_tightened(
                problem,
                &reference,
                &lin0,
                f64::INFINITY,
                Some(w),
                &mut QpState::new(problem),
            )? {
                Some((sub, u, _)) => (sub.states(&u), unstack(&u)),
                None => (reference.states.clone(), reference.controls.clone()),
            }
        }
    };

    let mut controls = controls;
    enforce_bound(&mut controls, problem.u_max);
    let lin_final = linearize_dynamics(orbit, dt, &states, &controls, residual);
    let mut chained = Vec::with_capacity(states.len());
    chained.push(problem.x0());
    for (k, st) in lin_final.steps.iter().enumerate() {
        let prev = chained[k];
        chained.push(st.a * prev + st.b * controls[k] + st.c);
    }
    // the chain through the final linearization reproduces `states` up to the
    // bound projection; keep whichever is closer to the boundary target
    let states =
        if (chained[chained.len() - 1] - problem.xf()).norm() <= (states[states.len() - 1] - problem.xf()).norm() {
            chained
        } else {
            states
        };
    let fin = evaluate(problem, orbit, states, controls);
    let control_excess = (fin.max_control - problem.u_max).max(0.0);
    let converged = converged
        && fin.terminal_miss < set.defect_tol
        && fin.collision_violation == 0.0
        && control_excess == 0.0
        && max_of(&fin.defects) < set.defect_tol;
    if !converged && message == "converged" {
        message = "bound projection left residual violations".into();
    }
    let report = SolveReport {
        iterations,
        qp_iterations: qp.iterations,
        final_cost: fin.cost,
        max_defect: max_of(&fin.defects),
        max_nonlinear_defect: max_of(&fin.nonlinear),
        max_constraint_violation: fin.collision_violation.max(control_excess).max(fin.terminal_miss),
        terminal_miss: fin.terminal_miss,
        min_separation: fin.min_separation,
        max_control: fin.max_control,
        converged,
        model_mismatch,
        cost_history: history,
        defect_profile: fin.defects,
        trust_radius: trust,
        message,
    };
    Ok(ScpSolution {
        times,
        states: fin.states,
        controls: fin.controls,
        report,
    })
}

/// Independent follower transfers solved concurrently.
pub fn solve_followers(problems: &[TranscriptionProblem], orbit: &LeaderOrbit) -> Vec<Result<ScpSolution>> {
    problems.par_iter().map(|p| solve_scp(p, orbit)).collect()
}
