//! Scenario runners: attitude runs per spacecraft, actuator sweeps and
//! follower transfers.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3, Vector6};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{axis_angle, ActuatorKind, ScenarioConfig, ScenarioKind};
use super::output::write_outputs;
use crate::control::{
    target_attitude, tracking_metrics, tracking_samples, AttitudeTarget, MagnetorquerController,
    ReactionWheelController, SettlingSpec, SettlingThreshold, TargetMode,
};
use crate::environment::{AlbedoGrid, AlbedoSettings};
use crate::error::{Error, Result};
use crate::facet::build_icosphere;
use crate::frames::{absolute_from_lvlh, lvlh_basis, Quaternion};
use crate::geopotential::GravityModel;
use crate::perturbations::{Environment, PerturbationSet, ACCEL_NAMES};
use crate::propagator::{propagate, Controller, ExtendedState, IntegratorConfig, Plant, StateVector13, Trajectory};
use crate::trajopt::{
    solve_followers, validate_on_nonlinear, DefectReport, LeaderOrbit, ScpSolution, SolveReport, TranscriptionProblem,
};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; the global pool when absent.
    pub threads: Option<usize>,
    /// Output directory, overriding the configured one; nothing is written
    /// when neither is set.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacecraftSummary {
    pub name: String,
    pub actuator: ActuatorKind,
    pub rms_attitude_error_deg: f64,
    /// rad/s, RMS over the run.
    pub spin_rate_error: f64,
    pub settling_time: Option<f64>,
    pub settled: bool,
    pub terminal_error_deg: f64,
    /// Whether the terminal error met the slew tolerance (Scenario II).
    pub met_tolerance: Option<bool>,
    pub avg_power: f64,
    /// RMS acceleration magnitude per contributor, m/s².
    pub accel_rms: BTreeMap<String, f64>,
    /// Largest |τ·B| / (‖τ‖‖B‖) of the magnetic torque over all samples.
    pub max_torque_field_cosine: f64,
    pub samples: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SpacecraftRun {
    pub trajectory: Trajectory,
    pub target: AttitudeTarget,
    pub summary: SpacecraftSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub coils: u32,
    /// Dipole capacity per coil, A·m².
    pub intensity: f64,
    pub spin_rate_error: Option<f64>,
    pub avg_power: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferSummary {
    pub name: String,
    pub converged: bool,
    pub report: Option<SolveReport>,
    pub replay: Option<DefectReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TransferRun {
    pub solution: Option<ScpSolution>,
    pub summary: TransferSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: ScenarioKind,
    pub config_hash: String,
    pub duration: f64,
    pub warnings: Vec<String>,
    pub spacecraft: Vec<SpacecraftSummary>,
    pub sweep: Vec<SweepCell>,
    pub transfers: Vec<TransferSummary>,
    /// Seconds; kept out of the written summary so outputs stay reproducible.
    #[serde(skip)]
    pub wall_clock: f64,
}

impl RunSummary {
    /// 0 on success, 3 if a propagation failed, 4 if a transfer did not converge.
    pub fn exit_code(&self) -> i32 {
        if self.spacecraft.iter().any(|s| s.failure.is_some()) || self.sweep.iter().any(|c| c.error.is_some()) {
            3
        } else if self.transfers.iter().any(|t| !t.converged) {
            4
        } else {
            0
        }
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("thread count must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Spacecraft, actuators and environment described by `cfg`.
pub fn build_plant(cfg: &ScenarioConfig) -> Result<Plant> {
    let p = &cfg.perturbations;
    let albedo = AlbedoGrid::new(&AlbedoSettings {
        bands: p.albedo_bands,
        eta_e: p.eta_e,
        ..Default::default()
    })?;
    let env = Environment::new(GravityModel::bundled(p.gravity_degree, p.gravity_order)?, albedo);
    let mut set = PerturbationSet::new(Arc::new(env));
    set.accel = p.accel;
    set.torque = p.torque;
    set.radiation = p.radiation;
    set.third_body_form = p.third_body_form;
    set.bias_torque = Vector3::from(p.bias_torque);
    set.frozen_epoch = cfg.frozen_epoch().then_some(cfg.epoch);

    let s = &cfg.spacecraft;
    let mut sc = build_icosphere(s.radius, s.subdivision, s.reflectivity, s.mass)?;
    if let Some(path) = &s.facets_file {
        sc.load_facets(path)?;
    }
    sc.cp_offset = Vector3::from(s.cp_offset);
    sc.drag_coefficient = s.drag_coefficient;
    if let Some(j) = s.inertia {
        sc.inertia = Matrix3::from_diagonal(&Vector3::from(j));
    }
    let wheels = (cfg.controller.kind == ActuatorKind::ReactionWheels).then(|| cfg.controller.wheels.clone());
    Plant::new(sc, wheels, set)
}

/// Names and inertial states of the leader and followers.
pub fn initial_states(cfg: &ScenarioConfig, mu: f64) -> Result<Vec<(String, Vector3<f64>, Vector3<f64>)>> {
    let (lr, lv) = cfg.leader.elements().to_state(mu);
    let mut out = vec![("leader".to_string(), lr, lv)];
    for (i, f) in cfg.followers.iter().enumerate() {
        let (r, v) = absolute_from_lvlh(&lr, &lv, &Vector3::from(f.position), &Vector3::from(f.velocity))?;
        out.push((format!("follower_{}", i + 1), r, v));
    }
    Ok(out)
}

pub fn target_for(cfg: &ScenarioConfig) -> Result<AttitudeTarget> {
    Ok(match cfg.scenario {
        ScenarioKind::ScenarioI | ScenarioKind::Trajopt => AttitudeTarget::default(),
        ScenarioKind::ScenarioIi => AttitudeTarget {
            mode: TargetMode::SlewTo,
            quaternion: cfg.slew.end()?,
            spin_rate: 0.0,
        },
        ScenarioKind::Sweep => AttitudeTarget {
            mode: TargetMode::OrbitNormalSpin,
            quaternion: Quaternion::identity(),
            spin_rate: cfg.sweep.spin_rate,
        },
        ScenarioKind::Custom => cfg.controller.target,
    })
}

fn initial_attitude(
    cfg: &ScenarioConfig,
    r: Vector3<f64>,
    v: Vector3<f64>,
    target: &AttitudeTarget,
) -> Result<StateVector13> {
    let rate = Vector3::from(cfg.initial_attitude.rate);
    let mut s = StateVector13 {
        r,
        v,
        q: Quaternion::identity(),
        w: rate,
    };
    match cfg.scenario {
        ScenarioKind::ScenarioIi => s.q = cfg.slew.start()?,
        // spin-up from the LVLH attitude
        ScenarioKind::Sweep => s.q = lvlh_basis(&r, &v)?.quaternion(),
        _ => {
            let (q_t, w_d) = target_attitude(&s, target)?;
            let offset = axis_angle(cfg.initial_attitude.offset_axis, cfg.initial_attitude.offset_angle)?;
            s.q = q_t.hamilton(&offset).normalize();
            s.w = s.q.rotate_inverse(&w_d) + rate;
        }
    }
    Ok(s)
}

fn controller(cfg: &ScenarioConfig, target: AttitudeTarget) -> Box<dyn Controller> {
    let c = &cfg.controller;
    match c.kind {
        ActuatorKind::Magnetorquer => Box::new(MagnetorquerController {
            target,
            gains: c.magnetorquer_gains,
            bank: c.magnetorquer,
            law: c.magnetorquer_law,
        }),
        ActuatorKind::ReactionWheels => Box::new(ReactionWheelController {
            target,
            gains: c.wheel_gains,
            dump: c.dump,
        }),
    }
}

fn integrator(cfg: &ScenarioConfig) -> IntegratorConfig {
    IntegratorConfig {
        stride: cfg.output.stride,
        ..cfg.integrator
    }
}

fn summarize(
    cfg: &ScenarioConfig,
    name: &str,
    traj: &Trajectory,
    target: &AttitudeTarget,
) -> Result<SpacecraftSummary> {
    let spec = match cfg.scenario {
        ScenarioKind::ScenarioIi => SettlingSpec {
            threshold: SettlingThreshold::Absolute(cfg.slew.settle_band),
            hold: cfg.slew.hold,
        },
        _ => SettlingSpec::default(),
    };
    let m = tracking_metrics(&tracking_samples(&traj.samples, target)?, &spec)?;
    let n = traj.samples.len() as f64;
    let mut accel_rms = BTreeMap::new();
    for (i, name) in ACCEL_NAMES.iter().enumerate() {
        let ms = traj
            .samples
            .iter()
            .map(|s| s.breakdown.accel[i].norm_squared())
            .sum::<f64>()
            / n;
        accel_rms.insert(name.to_string(), ms.sqrt());
    }
    let kind = cfg.controller.kind;
    let mut cosine: f64 = 0.0;
    for s in &traj.samples {
        let tau = match kind {
            ActuatorKind::Magnetorquer => s.command.torque,
            ActuatorKind::ReactionWheels => s.command.dipole.cross(&s.b_body),
        };
        let scale = tau.norm() * s.b_body.norm();
        if scale > 0.0 {
            cosine = cosine.max(tau.dot(&s.b_body).abs() / scale);
        }
    }
    let met_tolerance = (cfg.scenario == ScenarioKind::ScenarioIi)
        .then(|| m.settled && m.terminal_error_deg <= cfg.slew.terminal_tolerance);
    Ok(SpacecraftSummary {
        name: name.to_string(),
        actuator: kind,
        rms_attitude_error_deg: m.rms_attitude_error_deg,
        spin_rate_error: m.spin_rate_error,
        settling_time: m.settling_time,
        settled: m.settled,
        terminal_error_deg: m.terminal_error_deg,
        met_tolerance,
        avg_power: m.avg_power,
        accel_rms,
        max_torque_field_cosine: cosine,
        samples: traj.samples.len(),
        failure: traj.failure.as_ref().map(|(t, why)| format!("t = {t} s: {why}")),
    })
}

fn run_one(
    cfg: &ScenarioConfig,
    plant: &Plant,
    name: &str,
    r: Vector3<f64>,
    v: Vector3<f64>,
    target: &AttitudeTarget,
) -> Result<SpacecraftRun> {
    let s = initial_attitude(cfg, r, v, target)?;
    let mut ctrl = controller(cfg, *target);
    let traj = propagate(
        ExtendedState::new(s, plant.n_wheels()),
        cfg.epoch,
        cfg.duration(),
        &integrator(cfg),
        plant,
        ctrl.as_mut(),
    )?;
    let summary = summarize(cfg, name, &traj, target)?;
    Ok(SpacecraftRun {
        trajectory: traj,
        target: *target,
        summary,
    })
}

/// Attitude runs of every spacecraft (the leader only for sweeps), in
/// leader-then-follower order.
pub fn run_attitude(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<SpacecraftRun>> {
    cfg.validate()?;
    let plant = build_plant(cfg)?;
    let target = target_for(cfg)?;
    let mut states = initial_states(cfg, plant.set.env.gravity.mu)?;
    if cfg.scenario == ScenarioKind::Sweep {
        states.truncate(1);
    }
    with_pool(threads, || {
        states
            .par_iter()
            .map(|(name, r, v)| run_one(cfg, &plant, name, *r, *v, &target))
            .collect::<Result<Vec<_>>>()
    })?
}

/// One orbit-normal spin regulation per (coils, intensity) cell, coils outer.
pub fn run_sweep(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<SweepCell>> {
    let mut base = cfg.clone();
    base.scenario = ScenarioKind::Sweep;
    base.controller.kind = ActuatorKind::Magnetorquer;
    base.validate()?;
    let plant = build_plant(&base)?;
    let target = target_for(&base)?;
    let (_, r, v) = initial_states(&base, plant.set.env.gravity.mu)?.swap_remove(0);
    let cells: Vec<(u32, f64)> = base
        .sweep
        .coils
        .iter()
        .flat_map(|&c| base.sweep.intensity.iter().map(move |&x| (c, x)))
        .collect();
    with_pool(threads, || {
        cells
            .par_iter()
            .map(|&(coils, intensity)| {
                let mut c = base.clone();
                c.controller.magnetorquer.n_coils = coils;
                c.controller.magnetorquer.m_max = coils as f64 * intensity;
                let result = run_one(&c, &plant, "leader", r, v, &target).and_then(|run| match run.summary.failure {
                    Some(f) => Err(Error::Propagation {
                        time: run.trajectory.last().t,
                        reason: f,
                    }),
                    None => Ok(run.summary),
                });
                match result {
                    Ok(s) => SweepCell {
                        coils,
                        intensity,
                        spin_rate_error: Some(s.spin_rate_error),
                        avg_power: Some(s.avg_power),
                        error: None,
                    },
                    Err(e) => SweepCell {
                        coils,
                        intensity,
                        spin_rate_error: None,
                        avg_power: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    })
}

/// Transfer problem of every follower.
pub fn transfer_problems(cfg: &ScenarioConfig) -> Vec<TranscriptionProblem> {
    let t = &cfg.trajopt;
    cfg.followers
        .iter()
        .map(|f| {
            let x0 = Vector6::new(
                f.position[0],
                f.position[1],
                f.position[2],
                f.velocity[0],
                f.velocity[1],
                f.velocity[2],
            );
            let p = f.target_position.unwrap_or(f.position);
            let v = f.target_velocity.unwrap_or([0.0; 3]);
            let xf = Vector6::new(p[0], p[1], p[2], v[0], v[1], v[2]);
            let mut prob = TranscriptionProblem::new(t.nodes, t.dt, x0, xf, t.u_max, t.r_col);
            prob.bound = t.bound;
            prob.cost = t.cost;
            prob.dynamics = t.dynamics;
            prob.scp = t.scp;
            prob
        })
        .collect()
}

/// Optimized transfers of every follower, each replayed on the full propagator.
pub fn run_trajopt(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<TransferRun>> {
    let mut cfg = cfg.clone();
    cfg.scenario = ScenarioKind::Trajopt;
    cfg.validate()?;
    let plant = build_plant(&cfg)?;
    let elements = cfg.leader.elements();
    let orbit = LeaderOrbit {
        mu: plant.set.env.gravity.mu,
        radius: elements.a,
        eccentricity: elements.e,
    };
    let problems = transfer_problems(&cfg);
    with_pool(threads, || {
        let solutions = solve_followers(&problems, &orbit);
        solutions
            .into_par_iter()
            .enumerate()
            .map(|(i, sol)| {
                let name = format!("follower_{}", i + 1);
                match sol {
                    Ok(sol) => {
                        let replay = validate_on_nonlinear(&sol, &plant, &elements, cfg.epoch, cfg.trajopt.replay_step);
                        let (replay, error) = match replay {
                            Ok(r) => (Some(r), None),
                            Err(e) => (None, Some(format!("replay failed: {e}"))),
                        };
                        let error = error.or_else(|| (!sol.report.converged).then(|| sol.report.message.clone()));
                        TransferRun {
                            summary: TransferSummary {
                                name,
                                converged: sol.report.converged,
                                report: Some(sol.report.clone()),
                                replay,
                                error,
                            },
                            solution: Some(sol),
                        }
                    }
                    Err(e) => TransferRun {
                        solution: None,
                        summary: TransferSummary {
                            name,
                            converged: false,
                            report: None,
                            replay: None,
                            error: Some(e.to_string()),
                        },
                    },
                }
            })
            .collect()
    })
}

/// Run the configured scenario and, with an output directory, write its files.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunSummary> {
    let start = Instant::now();
    cfg.validate()?;
    let mut summary = RunSummary {
        scenario: cfg.scenario,
        config_hash: cfg.hash(),
        duration: cfg.duration(),
        warnings: cfg.warnings(),
        spacecraft: Vec::new(),
        sweep: Vec::new(),
        transfers: Vec::new(),
        wall_clock: 0.0,
    };
    let mut runs = Vec::new();
    let mut transfers = Vec::new();
    match cfg.scenario {
        ScenarioKind::Sweep => summary.sweep = run_sweep(cfg, opts.threads)?,
        ScenarioKind::Trajopt => {
            summary.duration = (cfg.trajopt.nodes - 1) as f64 * cfg.trajopt.dt;
            transfers = run_trajopt(cfg, opts.threads)?;
            summary.transfers = transfers.iter().map(|t| t.summary.clone()).collect();
        }
        _ => {
            runs = run_attitude(cfg, opts.threads)?;
            summary.spacecraft = runs.iter().map(|r| r.summary.clone()).collect();
        }
    }
    if let Some(dir) = opts.out.as_ref().or(cfg.output.dir.as_ref()) {
        write_outputs(dir, cfg, &summary, &runs, &transfers)?;
    }
    summary.wall_clock = start.elapsed().as_secs_f64();
    Ok(summary)
}
