//! Thirty-degree slew with reaction wheels and with magnetorquers.

use orbitfacet::scenario::{run_attitude, ActuatorKind, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::ScenarioIi);
    cfg.followers.clear();
    println!(
        "horizon {:.0} s, settle band {} deg",
        cfg.duration(),
        cfg.slew.settle_band
    );
    for kind in [ActuatorKind::ReactionWheels, ActuatorKind::Magnetorquer] {
        cfg.controller.kind = kind;
        let runs = run_attitude(&cfg, None)?;
        let s = &runs[0].summary;
        println!(
            "{kind:?}: settling {}, terminal {:.4} deg, tolerance met {:?}, avg power {:.3e} W",
            s.settling_time.map_or("never".into(), |t| format!("{t:.0} s")),
            s.terminal_error_deg,
            s.met_tolerance,
            s.avg_power
        );
    }
    Ok(())
}
