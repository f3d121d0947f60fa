//! Open-loop replay of an optimized transfer in the full propagator.

use nalgebra::Vector3;
use serde::Serialize;

use super::scp::ScpSolution;
use crate::control::ControlCommand;
use crate::error::{Error, Result};
use crate::frames::{absolute_from_lvlh, lvlh_basis, relative_lvlh, Epoch, OrbitalElements, Quaternion};
use crate::propagator::{propagate, Controller, ExtendedState, IntegratorConfig, NoControl, Plant, StateVector13};

#[derive(Debug, Clone, Serialize)]
pub struct DefectReport {
    /// Final relative position error, m.
    pub terminal_miss: f64,
    pub terminal_velocity_miss: f64,
    /// Relative position error at every node, m.
    pub node_divergence: Vec<f64>,
    pub max_divergence: f64,
}

/// Follower thrust: the node control, held in the leader LVLH frame.
struct Replay<'a> {
    t0: Epoch,
    node_dt: f64,
    prop_dt: f64,
    controls: &'a [Vector3<f64>],
    leader: &'a [(Vector3<f64>, Vector3<f64>)],
}

impl Controller for Replay<'_> {
    fn command(
        &mut self,
        epoch: Epoch,
        x: &crate::propagator::ExtendedState,
        _plant: &Plant,
    ) -> Result<ControlCommand> {
        let t = epoch.0 - self.t0.0;
        let mut cmd = ControlCommand::zero(x.h_w.len());
        let k = (t / self.node_dt + 1e-9).floor() as usize;
        if let Some(u) = self.controls.get(k) {
            let last = self.leader.len() - 1;
            let i = ((t / self.prop_dt).round() as usize).min(last);
            let (r0, v0) = &self.leader[i];
            let (r1, v1) = &self.leader[(i + 1).min(last)];
            // frame at the step midpoint
            cmd.thrust_accel = lvlh_basis(&(r0 + r1), &(v0 + v1))?.to_eci() * u;
        }
        Ok(cmd)
    }
}

fn at_rest(r: Vector3<f64>, v: Vector3<f64>) -> StateVector13 {
    StateVector13 {
        r,
        v,
        q: Quaternion::identity(),
        w: Vector3::zeros(),
    }
}

/// Replay `solution` for a follower relative to a leader starting on
/// `leader`, both integrated by `plant`. `max_step` bounds the integrator
/// step; it is reduced to divide the node spacing.
pub fn validate_on_nonlinear(
    solution: &ScpSolution,
    plant: &Plant,
    leader: &OrbitalElements,
    t0: Epoch,
    max_step: f64,
) -> Result<DefectReport> {
    if solution.states.len() < 2 {
        return Err(Error::config("solution has fewer than two nodes"));
    }
    let node_dt = solution.times[1] - solution.times[0];
    let sub = (node_dt / max_step).ceil().max(1.0) as usize;
    let prop_dt = node_dt / sub as f64;
    let duration = solution.times[solution.times.len() - 1] - solution.times[0];
    let cfg = IntegratorConfig {
        dt: prop_dt,
        stride: 1,
        max_steps: usize::MAX,
        ..Default::default()
    };
    let (lr, lv) = leader.to_state(plant.set.env.gravity.mu);
    let lead = propagate(
        ExtendedState::new(at_rest(lr, lv), plant.n_wheels()),
        t0,
        duration,
        &cfg,
        plant,
        &mut NoControl,
    )?;
    lead.check()?;
    let leader_states: Vec<_> = lead.samples.iter().map(|s| (s.x.s.r, s.x.s.v)).collect();

    let x0 = solution.states[0];
    let (fr, fv) = absolute_from_lvlh(&lr, &lv, &x0.fixed_rows::<3>(0).into(), &x0.fixed_rows::<3>(3).into())?;
    let mut replay = Replay {
        t0,
        node_dt,
        prop_dt,
        controls: &solution.controls,
        leader: &leader_states,
    };
    let follow = propagate(
        ExtendedState::new(at_rest(fr, fv), plant.n_wheels()),
        t0,
        duration,
        &cfg,
        plant,
        &mut replay,
    )?;
    follow.check()?;

    let mut node_divergence = Vec::with_capacity(solution.states.len());
    let mut terminal_velocity_miss = 0.0;
    for (k, x) in solution.states.iter().enumerate() {
        let i = (k * sub).min(follow.samples.len() - 1);
        let (lr, lv) = leader_states[i];
        let s = &follow.samples[i].x.s;
        let (dr, dv) = relative_lvlh(&lr, &lv, &s.r, &s.v)?;
        node_divergence.push((dr - x.fixed_rows::<3>(0)).norm());
        if k + 1 == solution.states.len() {
            terminal_velocity_miss = (dv - x.fixed_rows::<3>(3)).norm();
        }
    }
    Ok(DefectReport {
        terminal_miss: *node_divergence.last().unwrap(),
        terminal_velocity_miss,
        max_divergence: node_divergence.iter().copied().fold(0.0, f64::max),
        node_divergence,
    })
}
