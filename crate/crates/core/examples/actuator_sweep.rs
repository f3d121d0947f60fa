//! Orbit-normal spin regulation over a small grid of coil counts and dipole
//! capacities.

use orbitfacet::scenario::{run_sweep, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Sweep);
    cfg.sweep.coils = vec![1, 3];
    cfg.sweep.intensity = vec![0.5, 2.0, 8.0];
    println!(
        "{:>5} {:>9} {:>14} {:>12}",
        "coils", "A·m²", "spin err rad/s", "power W"
    );
    for c in run_sweep(&cfg, None)? {
        match (c.spin_rate_error, c.avg_power) {
            (Some(e), Some(p)) => println!("{:>5} {:>9} {e:>14.4e} {p:>12.4e}", c.coils, c.intensity),
            _ => println!(
                "{:>5} {:>9} failed: {}",
                c.coils,
                c.intensity,
                c.error.unwrap_or_default()
            ),
        }
    }
    Ok(())
}
