//! Ten orbits of point-mass gravity with every perturbation off: energy and
//! orbit-normal drift of the fixed-step integrator.

use std::sync::Arc;

use nalgebra::Vector3;
use orbitfacet::constants::{MU_EARTH, R_EARTH};
use orbitfacet::environment::{AlbedoGrid, AlbedoSettings};
use orbitfacet::facet::build_icosphere;
use orbitfacet::frames::{Epoch, Quaternion};
use orbitfacet::geopotential::GravityModel;
use orbitfacet::perturbations::{AccelToggles, Environment, PerturbationSet, TorqueToggles};
use orbitfacet::propagator::{propagate, ExtendedState, IntegratorConfig, NoControl, Plant, StateVector13};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = Environment::new(
        GravityModel::point_mass(MU_EARTH, R_EARTH),
        AlbedoGrid::new(&AlbedoSettings::default())?,
    );
    let mut set = PerturbationSet::new(Arc::new(env));
    set.accel = AccelToggles::only(0);
    set.torque = TorqueToggles::all(false);
    let plant = Plant::new(build_icosphere(1.0, 2, 0.3, 50.0)?, None, set)?;

    let a = R_EARTH + 600e3;
    let v = (MU_EARTH / a).sqrt();
    let inc = 97.8f64.to_radians();
    let s0 = StateVector13 {
        r: Vector3::new(a, 0.0, 0.0),
        v: Vector3::new(0.0, v * inc.cos(), v * inc.sin()),
        q: Quaternion::identity(),
        w: Vector3::zeros(),
    };
    let period = 2.0 * std::f64::consts::PI * (a.powi(3) / MU_EARTH).sqrt();
    let energy = |s: &StateVector13| 0.5 * s.v.norm_squared() - MU_EARTH / s.r.norm();
    let h0 = s0.r.cross(&s0.v).normalize();

    for dt in [20.0, 10.0, 5.0] {
        let cfg = IntegratorConfig {
            dt,
            stride: 60,
            ..Default::default()
        };
        let start = std::time::Instant::now();
        let traj = propagate(
            ExtendedState::new(s0, 0),
            Epoch(0.0),
            10.0 * period,
            &cfg,
            &plant,
            &mut NoControl,
        )?;
        let (mut de, mut dh) = (0.0f64, 0.0f64);
        for smp in &traj.samples {
            let s = &smp.x.s;
            de = de.max(((energy(s) - energy(&s0)) / energy(&s0)).abs());
            dh = dh.max(s.r.cross(&s.v).normalize().angle(&h0));
        }
        println!(
            "dt {dt:>4} s: energy drift {de:.3e}, normal drift {dh:.3e} rad, {:.2} s",
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
