//! Nadir pointing over one orbit with reaction wheels and with magnetorquers.

use orbitfacet::scenario::{run_attitude, ActuatorKind, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::ScenarioI);
    cfg.followers.clear();
    for kind in [ActuatorKind::ReactionWheels, ActuatorKind::Magnetorquer] {
        cfg.controller.kind = kind;
        let start = std::time::Instant::now();
        let runs = run_attitude(&cfg, None)?;
        let s = &runs[0].summary;
        println!(
            "{kind:?}: rms {:.5} deg, terminal {:.5} deg, avg power {:.3e} W, {:.1} s",
            s.rms_attitude_error_deg,
            s.terminal_error_deg,
            s.avg_power,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
