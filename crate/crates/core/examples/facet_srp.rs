//! Net solar pressure force on icosphere meshes of increasing subdivision,
//! against the absorbing-sphere value πR²P.

use std::f64::consts::PI;

use nalgebra::Vector3;
use orbitfacet::constants::P_SUN;
use orbitfacet::facet::{build_icosphere, total_radiation_wrench, RadiationFieldSample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Vector3::new(0.2, 0.7, -0.4).normalize();
    let sample = RadiationFieldSample::sun_only(dir, P_SUN);
    let exact = PI * P_SUN;
    println!("absorbing sphere, R = 1 m: πR²P = {exact:.6e} N");
    for level in 0..=5 {
        let sc = build_icosphere(1.0, level, 0.0, 50.0)?;
        let w = total_radiation_wrench(&sc, &sample);
        println!(
            "level {level}: {:>5} facets  |F| = {:.6e} N  rel err {:.2e}  |τ|/(|F|R) = {:.1e}",
            sc.facets.len(),
            w.force.norm(),
            (w.force.norm() - exact).abs() / exact,
            w.torque.norm() / w.force.norm()
        );
    }
    let shiny = build_icosphere(1.0, 3, 0.6, 50.0)?;
    let w = total_radiation_wrench(&shiny, &sample);
    println!("reflectivity 0.6, level 3: |F| = {:.6e} N", w.force.norm());
    Ok(())
}
