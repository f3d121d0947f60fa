//! Spherical-harmonic gravity at increasing truncation degree, compared with
//! the point-mass field.

use nalgebra::Vector3;
use orbitfacet::constants::R_EARTH;
use orbitfacet::frames::Epoch;
use orbitfacet::geopotential::{gravity_accel, GravityModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = Vector3::new(0.3, -0.5, 0.8).normalize() * (R_EARTH + 600e3);
    let epoch = Epoch(0.0);
    let full = GravityModel::bundled(20, 20)?;
    let kepler = GravityModel::point_mass(full.mu, full.radius);
    let a0 = gravity_accel(&kepler, &r, epoch)?;
    let a20 = gravity_accel(&full, &r, epoch)?;
    println!("point mass   |a| = {:.9} m/s²", a0.norm());
    for n in [2, 4, 8, 12, 20] {
        let model = GravityModel::bundled(n, n)?;
        let a = gravity_accel(&model, &r, epoch)?;
        println!(
            "degree {n:>2}    |a - a_pm| = {:.3e}   |a - a_20| = {:.3e} m/s²",
            (a - a0).norm(),
            (a - a20).norm()
        );
    }
    Ok(())
}
