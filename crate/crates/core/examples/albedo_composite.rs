//! Per-facet albedo and solar pressure over a nadir-pointing icosphere, at a
//! sunlit and an eclipsed point of the orbit.

use nalgebra::Vector3;
use orbitfacet::frames::lvlh_basis;
use orbitfacet::perturbations::{evaluate_all, facet_albedo_composite, index_order_sum, RadiationModel};
use orbitfacet::propagator::StateVector13;
use orbitfacet::scenario::{build_plant, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Custom);
    cfg.perturbations.radiation = RadiationModel::Facet;
    cfg.perturbations.torque.srp = false;
    cfg.perturbations.torque.albedo = false;
    cfg.perturbations.torque.facet_radiation = true;
    let plant = build_plant(&cfg)?;
    let sun = plant.set.sun_position(cfg.epoch).normalize();
    let a = cfg.leader.elements().a;
    let v = (plant.set.env.gravity.mu / a).sqrt();
    let along = sun.cross(&Vector3::z()).normalize();

    for (label, dir) in [("sunlit", sun), ("eclipsed", -sun)] {
        let r = dir * a;
        let vel = along * v;
        let s = StateVector13 {
            r,
            v: vel,
            q: lvlh_basis(&r, &vel)?.quaternion(),
            w: Vector3::zeros(),
        };
        let c = facet_albedo_composite(&s, &plant.sc, &plant.set, cfg.epoch)?;
        let b = evaluate_all(&s, &plant.sc, &plant.set, cfg.epoch)?;
        let nadir = s.q.rotate_inverse(&(-dir));
        let facing = plant.sc.facets.iter().filter(|f| f.normal.dot(&nadir) > 0.0).count();
        let peak = c.albedo_body.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let srp: f64 = c.solar_body.iter().map(|x| x.norm()).sum();
        println!("{label}: {} facets, {facing} facing Earth", plant.sc.facets.len());
        println!("  largest facet albedo {peak:.3e} m/s², summed facet SRP magnitude {srp:.3e} m/s²");
        println!(
            "  net albedo {:.4e} m/s² (breakdown {:.4e}, identical: {})",
            index_order_sum(&c.albedo_eci).norm(),
            b.accel[7].norm(),
            index_order_sum(&c.albedo_eci) == b.accel[7]
        );
    }
    Ok(())
}
