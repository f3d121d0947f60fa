//! Acceleration and torque contributors on a 600 km sun-synchronous orbit.

use nalgebra::Vector3;
use orbitfacet::frames::lvlh_basis;
use orbitfacet::perturbations::{evaluate_all, ACCEL_NAMES, TORQUE_NAMES};
use orbitfacet::propagator::StateVector13;
use orbitfacet::scenario::{build_plant, initial_states, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::new(ScenarioKind::ScenarioI);
    let plant = build_plant(&cfg)?;
    let (_, r, v) = initial_states(&cfg, plant.set.env.gravity.mu)?.swap_remove(0);
    let s = StateVector13 {
        r,
        v,
        q: lvlh_basis(&r, &v)?.quaternion(),
        w: Vector3::zeros(),
    };
    let b = evaluate_all(&s, &plant.sc, &plant.set, cfg.epoch)?;
    println!("{:<16} {:>12}", "acceleration", "m/s²");
    for (name, a) in ACCEL_NAMES.iter().zip(&b.accel) {
        println!("{name:<16} {:>12.4e}", a.norm());
    }
    println!("{:<16} {:>12.4e}", "total", b.total_accel.norm());
    println!();
    println!("{:<16} {:>12}", "torque", "N·m");
    for (name, t) in TORQUE_NAMES.iter().zip(&b.torque) {
        println!("{name:<16} {:>12.4e}", t.norm());
    }
    println!("shadow factor {}", b.shadow);
    Ok(())
}
