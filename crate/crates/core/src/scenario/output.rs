//! CSV channels, facet composite maps and the run summary.

use std::fs::{self, File};
use std::path::Path;

use nalgebra::Vector3;

use super::config::{ActuatorKind, Channel, ScenarioConfig};
use super::run::{RunSummary, SpacecraftRun, SweepCell, TransferRun};
use crate::control::error_angle;
use crate::error::{Error, Result};
use crate::facet::FacetedSpacecraft;
use crate::frames::lvlh_basis;
use crate::perturbations::{facet_albedo_composite, PerturbationSet, ACCEL_NAMES};
use crate::propagator::{IntegratorConfig, Sample, StateVector13};

pub const ORBIT_HEADER: [&str; 7] = ["t", "rx", "ry", "rz", "vx", "vy", "vz"];
pub const ATTITUDE_HEADER: [&str; 14] = [
    "t", "q1", "q2", "q3", "q4", "roll", "pitch", "yaw", "wx", "wy", "wz", "dev_x", "dev_y", "dev_z",
];
pub const CONTROL_HEADER: [&str; 6] = ["t", "command", "torque_x", "torque_y", "torque_z", "power"];
pub const FACET_HEADER: [&str; 13] = [
    "t", "facet", "nx", "ny", "nz", "albedo", "srp", "albedo_x", "albedo_y", "albedo_z", "net_x", "net_y", "net_z",
];
pub const TRANSFER_HEADER: [&str; 11] = ["t", "x", "y", "z", "vx", "vy", "vz", "ux", "uy", "uz", "divergence"];

/// Rows of every time-series file: `⌈steps / stride⌉ + 1`.
pub fn expected_rows(cfg: &ScenarioConfig) -> usize {
    let icfg = IntegratorConfig {
        stride: cfg.output.stride,
        ..cfg.integrator
    };
    icfg.step_count(0.0, cfg.duration()).div_ceil(icfg.stride) + 1
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn write_rows<const N: usize>(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Result<[f64; N]>>,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row?.as_slice())?;
    }
    w.flush()?;
    Ok(())
}

/// Rotation vector from the local LVLH frame to the body, rad.
pub fn lvlh_deviation(s: &StateVector13) -> Result<Vector3<f64>> {
    let q_l = lvlh_basis(&s.r, &s.v)?.quaternion();
    let d = q_l.inverse().hamilton(&s.q).normalize().canonical();
    let n = d.vec.norm();
    Ok(if n > 0.0 {
        d.vec * (error_angle(&d) / n)
    } else {
        Vector3::zeros()
    })
}

fn orbit_row(s: &Sample) -> Result<[f64; 7]> {
    let x = &s.x.s;
    Ok([s.t, x.r.x, x.r.y, x.r.z, x.v.x, x.v.y, x.v.z])
}

fn attitude_row(s: &Sample) -> Result<[f64; 14]> {
    let x = &s.x.s;
    let q = x.q.to_array();
    let e = x.q.euler_321();
    let d = lvlh_deviation(x)?;
    Ok([
        s.t, q[0], q[1], q[2], q[3], e[0], e[1], e[2], x.w.x, x.w.y, x.w.z, d.x, d.y, d.z,
    ])
}

fn control_row(s: &Sample, kind: ActuatorKind) -> Result<[f64; 6]> {
    let c = &s.command;
    let command = match kind {
        ActuatorKind::Magnetorquer => c.dipole.norm(),
        ActuatorKind::ReactionWheels => c.wheel_torque.iter().map(|t| t * t).sum::<f64>().sqrt(),
    };
    Ok([s.t, command, c.torque.x, c.torque.y, c.torque.z, c.power])
}

fn breakdown_row(s: &Sample) -> Result<[f64; 9]> {
    let m = s.breakdown.accel_magnitudes();
    Ok([s.t, m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7]])
}

/// Per-facet albedo and solar accelerations at the samples nearest to each
/// requested time. Normals are BODY; the albedo and net vectors are ECI.
pub fn write_facet_composite(
    path: &Path,
    samples: &[Sample],
    times: &[f64],
    sc: &FacetedSpacecraft,
    set: &PerturbationSet,
    t0: crate::frames::Epoch,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(FACET_HEADER)?;
    for &t in times {
        let Some(s) = samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        else {
            break;
        };
        let c = facet_albedo_composite(&s.x.s, sc, set, t0 + s.t)?;
        for (i, f) in sc.facets.iter().enumerate() {
            let (a, p) = (c.albedo_eci[i], c.solar_eci[i]);
            let net = a + p;
            w.serialize((
                s.t,
                i,
                f.normal.x,
                f.normal.y,
                f.normal.z,
                c.albedo_body[i].norm(),
                c.solar_body[i].norm(),
                a.x,
                a.y,
                a.z,
                net.x,
                net.y,
                net.z,
            ))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_spacecraft(dir: &Path, cfg: &ScenarioConfig, run: &SpacecraftRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    let samples = &run.trajectory.samples;
    let kind = cfg.controller.kind;
    for ch in &cfg.output.channels {
        match ch {
            Channel::Orbit => write_rows(&dir.join("orbit.csv"), &ORBIT_HEADER, samples.iter().map(orbit_row))?,
            Channel::Attitude => write_rows(
                &dir.join("attitude.csv"),
                &ATTITUDE_HEADER,
                samples.iter().map(attitude_row),
            )?,
            Channel::Control => write_rows(
                &dir.join("control.csv"),
                &CONTROL_HEADER,
                samples.iter().map(|s| control_row(s, kind)),
            )?,
            Channel::Breakdown => {
                let header: Vec<&str> = std::iter::once("t").chain(ACCEL_NAMES).collect();
                write_rows(&dir.join("breakdown.csv"), &header, samples.iter().map(breakdown_row))?
            }
            Channel::FacetComposite => {}
        }
    }
    Ok(())
}

fn write_sweep(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut w = writer(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

fn write_transfer(path: &Path, run: &TransferRun) -> Result<()> {
    let Some(sol) = &run.solution else {
        return Ok(());
    };
    let divergence = run.summary.replay.as_ref().map(|r| &r.node_divergence);
    let rows = sol.times.iter().zip(&sol.states).enumerate().map(|(k, (t, x))| {
        let u = sol.controls.get(k).copied().unwrap_or_else(Vector3::zeros);
        let d = divergence.and_then(|d| d.get(k)).copied().unwrap_or(f64::NAN);
        Ok([*t, x[0], x[1], x[2], x[3], x[4], x[5], u.x, u.y, u.z, d])
    });
    write_rows(path, &TRANSFER_HEADER, rows)
}

/// Write every output of a finished run under `dir`.
pub fn write_outputs(
    dir: &Path,
    cfg: &ScenarioConfig,
    summary: &RunSummary,
    runs: &[SpacecraftRun],
    transfers: &[TransferRun],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let resolved = toml::to_string(cfg).map_err(|e| Error::config(e.to_string()))?;
    fs::write(dir.join("config.toml"), resolved)?;

    let facets = cfg.output.channels.contains(&Channel::FacetComposite) && !cfg.output.facet_times.is_empty();
    let plant = if facets {
        Some(super::run::build_plant(cfg)?)
    } else {
        None
    };
    for run in runs {
        let sub = dir.join(&run.summary.name);
        write_spacecraft(&sub, cfg, run)?;
        if let Some(p) = &plant {
            write_facet_composite(
                &sub.join("facet_composite.csv"),
                &run.trajectory.samples,
                &cfg.output.facet_times,
                &p.sc,
                &p.set,
                cfg.epoch,
            )?;
        }
    }
    if !summary.sweep.is_empty() {
        write_sweep(&dir.join("sweep.csv"), &summary.sweep)?;
    }
    for t in transfers {
        let sub = dir.join(&t.summary.name);
        fs::create_dir_all(&sub)?;
        write_transfer(&sub.join("transfer.csv"), t)?;
    }
    let json = serde_json::to_string_pretty(summary).map_err(|e| Error::config(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}
