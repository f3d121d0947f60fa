//! Faceted spacecraft geometry and per-facet radiation pressure.
//!
//! The incidence cosine of a facet is `n_jᵀ r_⊙`, where `r_⊙` points from the
//! spacecraft toward the source; lit facets are pushed away from the source.
//! Facets never shadow each other, which is exact for convex shapes only.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub area: f64,
    /// Outward unit normal, BODY.
    pub normal: Vector3<f64>,
    /// Position relative to the center of mass, BODY, m.
    pub position: Vector3<f64>,
    pub reflectivity: f64,
}

impl Facet {
    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0) {
            return Err(Error::config(format!("facet area must be positive, got {}", self.area)));
        }
        if (self.normal.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::config("facet normal must be a unit vector"));
        }
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(Error::config("facet reflectivity must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacetedSpacecraft {
    pub facets: Vec<Facet>,
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    /// Center-of-pressure offset from the center of mass, BODY, m.
    pub cp_offset: Vector3<f64>,
    pub drag_coefficient: f64,
    /// Bulk reflectivity for the lumped radiation path.
    pub reflectivity: f64,
    /// Bulk cross-section, m².
    pub cross_section: f64,
}

/// Radiation environment as seen by the spacecraft, BODY frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationFieldSample {
    /// Unit vector toward the Sun.
    pub sun_dir: Vector3<f64>,
    /// Shadowed, distance-scaled solar pressure, N/m².
    pub solar_pressure: f64,
    /// Unit vector toward the effective albedo source.
    pub albedo_dir: Vector3<f64>,
    pub albedo_pressure: AlbedoPressure,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlbedoPressure {
    Uniform(f64),
    PerFacet(Vec<f64>),
}

impl AlbedoPressure {
    fn at(&self, j: usize) -> f64 {
        match self {
            AlbedoPressure::Uniform(p) => *p,
            AlbedoPressure::PerFacet(ps) => ps[j],
        }
    }
}

impl RadiationFieldSample {
    pub fn sun_only(sun_dir: Vector3<f64>, solar_pressure: f64) -> Self {
        Self {
            sun_dir,
            solar_pressure,
            albedo_dir: -sun_dir,
            albedo_pressure: AlbedoPressure::Uniform(0.0),
        }
    }
}

/// Force of a directed radiation field of pressure `pressure` from direction `dir` on one facet.
pub fn facet_radiation_force(f: &Facet, dir: &Vector3<f64>, pressure: f64) -> Vector3<f64> {
    let cos = f.normal.dot(dir);
    if cos <= 0.0 || pressure == 0.0 {
        return Vector3::zeros();
    }
    let rho = f.reflectivity;
    -(dir * ((1.0 - rho) * cos) + f.normal * (2.0 * rho * cos * cos)) * (pressure * f.area)
}

pub fn facet_srp_force(f: &Facet, sample: &RadiationFieldSample) -> Vector3<f64> {
    facet_radiation_force(f, &sample.sun_dir, sample.solar_pressure)
}

/// Albedo force on facet `j` of a spacecraft (the pressure may vary per facet).
pub fn facet_albedo_force(f: &Facet, j: usize, sample: &RadiationFieldSample) -> Vector3<f64> {
    facet_radiation_force(f, &sample.albedo_dir, sample.albedo_pressure.at(j))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiationWrench {
    /// N, BODY.
    pub force: Vector3<f64>,
    /// N·m, BODY.
    pub torque: Vector3<f64>,
    /// Per-facet solar acceleration, m/s², BODY.
    pub solar_accel: Vec<Vector3<f64>>,
    /// Per-facet albedo acceleration, m/s², BODY.
    pub albedo_accel: Vec<Vector3<f64>>,
}

impl RadiationWrench {
    pub fn facet_accelerations(&self) -> Vec<Vector3<f64>> {
        self.solar_accel
            .iter()
            .zip(&self.albedo_accel)
            .map(|(s, a)| s + a)
            .collect()
    }
}

pub fn total_radiation_wrench(sc: &FacetedSpacecraft, sample: &RadiationFieldSample) -> RadiationWrench {
    let n = sc.facets.len();
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    let mut solar_accel = Vec::with_capacity(n);
    let mut albedo_accel = Vec::with_capacity(n);
    for (j, f) in sc.facets.iter().enumerate() {
        let fs = facet_srp_force(f, sample);
        let fa = facet_albedo_force(f, j, sample);
        let fj = fs + fa;
        force += fj;
        torque += f.position.cross(&fj);
        solar_accel.push(fs / sc.mass);
        albedo_accel.push(fa / sc.mass);
    }
    RadiationWrench {
        force,
        torque,
        solar_accel,
        albedo_accel,
    }
}

struct Mesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
}

fn icosahedron() -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|v| Vector3::from(*v).normalize()).collect();
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    Mesh { vertices, triangles }
}

fn subdivide(mesh: Mesh) -> Mesh {
    let Mesh {
        mut vertices,
        triangles,
    } = mesh;
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(triangles.len() * 4);
    for [a, b, c] in triangles {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        out.push([a, ab, ca]);
        out.push([b, bc, ab]);
        out.push([c, ca, bc]);
        out.push([ab, bc, ca]);
    }
    Mesh {
        vertices,
        triangles: out,
    }
}

pub const MAX_SUBDIVISION: u32 = 7;

/// Icosphere with vertices on a sphere of `radius`, flat triangular facets,
/// uniform thin-shell inertia `(2/3) m R² I`.
pub fn build_icosphere(radius: f64, level: u32, reflectivity: f64, mass: f64) -> Result<FacetedSpacecraft> {
    if level > MAX_SUBDIVISION {
        return Err(Error::config(format!(
            "subdivision level {level} exceeds {MAX_SUBDIVISION}"
        )));
    }
    if !(radius > 0.0 && mass > 0.0) {
        return Err(Error::config("radius and mass must be positive"));
    }
    let mut mesh = icosahedron();
    for _ in 0..level {
        mesh = subdivide(mesh);
    }
    let facets = mesh
        .triangles
        .iter()
        .map(|&[a, b, c]| {
            let (pa, pb, pc) = (
                mesh.vertices[a] * radius,
                mesh.vertices[b] * radius,
                mesh.vertices[c] * radius,
            );
            let cross = (pb - pa).cross(&(pc - pa));
            Facet {
                area: 0.5 * cross.norm(),
                normal: cross.normalize(),
                position: (pa + pb + pc) / 3.0,
                reflectivity,
            }
        })
        .collect();
    let sc = FacetedSpacecraft {
        facets,
        mass,
        inertia: Matrix3::identity() * (2.0 / 3.0 * mass * radius * radius),
        cp_offset: Vector3::zeros(),
        drag_coefficient: 2.2,
        reflectivity,
        cross_section: PI * radius * radius,
    };
    Ok(sc)
}

impl FacetedSpacecraft {
    pub fn total_area(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    pub fn area_to_mass(&self) -> f64 {
        self.cross_section / self.mass
    }

    /// Area-weighted mean facet reflectivity.
    pub fn mean_reflectivity(&self) -> f64 {
        let total = self.total_area();
        self.facets.iter().map(|f| f.area * f.reflectivity).sum::<f64>() / total
    }

    /// ‖Σ A_j n_j‖ relative to Σ A_j.
    pub fn closure_defect(&self) -> f64 {
        let sum: Vector3<f64> = self.facets.iter().map(|f| f.normal * f.area).sum();
        sum.norm() / self.total_area()
    }

    /// Perturb every facet reflectivity by a uniform draw in ±`amplitude`, clamped to [0, 1].
    pub fn perturb_reflectivity(&mut self, amplitude: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for f in &mut self.facets {
            let delta = amplitude * (2.0 * rng.random::<f64>() - 1.0);
            f.reflectivity = (f.reflectivity + delta).clamp(0.0, 1.0);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.facets.is_empty() {
            return Err(Error::config("spacecraft has no facets"));
        }
        for f in &self.facets {
            f.validate()?;
        }
        if !(self.mass > 0.0) {
            return Err(Error::config("spacecraft mass must be positive"));
        }
        let j = &self.inertia;
        if (j - j.transpose()).abs().max() > 1e-12 * j.abs().max() {
            return Err(Error::config("inertia tensor must be symmetric"));
        }
        if j.cholesky().is_none() {
            return Err(Error::config("inertia tensor must be positive definite"));
        }
        if !(self.cross_section > 0.0 && self.drag_coefficient >= 0.0) {
            return Err(Error::config("invalid bulk drag/radiation properties"));
        }
        Ok(())
    }

    /// Replace the facets with rows `area nx ny nz rx ry rz rho` from a text file.
    pub fn load_facets(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.facets = parse_facets(&text, path)?;
        Ok(())
    }
}

pub fn parse_facets(text: &str, origin: &Path) -> Result<Vec<Facet>> {
    let mut facets = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| err(e.to_string())))
            .collect::<Result<_>>()?;
        if v.len() != 8 {
            return Err(err(format!("expected 8 columns, found {}", v.len())));
        }
        let facet = Facet {
            area: v[0],
            normal: Vector3::new(v[1], v[2], v[3]),
            position: Vector3::new(v[4], v[5], v[6]),
            reflectivity: v[7],
        };
        facet.validate().map_err(|e| err(e.to_string()))?;
        facets.push(facet);
    }
    if facets.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: "no facets".into(),
        });
    }
    Ok(facets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::P_SUN;
    use crate::frames::Quaternion;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn facet(normal: Vector3<f64>, rho: f64) -> Facet {
        Facet {
            area: 0.3,
            normal,
            position: Vector3::new(0.0, 0.0, 1.0),
            reflectivity: rho,
        }
    }

    #[test]
    fn facet_counts() {
        for (level, n) in [(0, 20), (1, 80), (3, 1280)] {
            let sc = build_icosphere(1.0, level, 0.3, 50.0).unwrap();
            assert_eq!(sc.facets.len(), n);
            assert!(sc.closure_defect() < 1e-12);
            sc.validate().unwrap();
        }
        assert!(build_icosphere(1.0, 8, 0.3, 50.0).is_err());
    }

    #[test]
    fn area_converges_to_sphere() {
        let sphere = 4.0 * PI;
        let mut prev = f64::INFINITY;
        for level in 0..=5 {
            let sc = build_icosphere(1.0, level, 0.0, 50.0).unwrap();
            let err = (sc.total_area() - sphere).abs() / sphere;
            assert!(err < prev);
            if level == 3 {
                assert!(err < 0.01, "{err}");
            }
            prev = err;
        }
    }

    #[test]
    fn normals_point_outward() {
        let sc = build_icosphere(2.0, 2, 0.1, 50.0).unwrap();
        for f in &sc.facets {
            assert!(f.normal.dot(&f.position) > 0.0);
        }
    }

    #[test]
    fn single_facet_anchors() {
        let s = Vector3::z();
        assert_eq!(
            facet_radiation_force(&facet(-Vector3::z(), 0.3), &s, 1.0),
            Vector3::zeros()
        );

        let f = facet(Vector3::z(), 1.0);
        assert_relative_eq!(facet_radiation_force(&f, &s, 2.0), -Vector3::z() * (2.0 * 2.0 * 0.3));

        // incidence 60°: cos = 1/2, absorbed force P A cos along -r_⊙
        let n = Vector3::new(60f64.to_radians().sin(), 0.0, 60f64.to_radians().cos());
        let f = facet(n, 0.0);
        let force = facet_radiation_force(&f, &s, 2.0);
        assert_relative_eq!(force.norm(), 2.0 * 0.3 / 2.0, max_relative = 1e-15);
        assert_relative_eq!(force.normalize(), -s, epsilon = 1e-15);
    }

    #[test]
    fn albedo_mirrors_solar_kernel() {
        let f = facet(Vector3::new(0.6, 0.0, 0.8), 0.4);
        let dir = Vector3::new(0.0, 0.6, 0.8);
        let sample = RadiationFieldSample {
            sun_dir: dir,
            solar_pressure: 3.0,
            albedo_dir: dir,
            albedo_pressure: AlbedoPressure::Uniform(3.0),
        };
        assert_eq!(facet_srp_force(&f, &sample), facet_albedo_force(&f, 0, &sample));
        let off = RadiationFieldSample {
            albedo_pressure: AlbedoPressure::Uniform(0.0),
            ..sample
        };
        assert_eq!(facet_albedo_force(&f, 0, &off), Vector3::zeros());
    }

    #[test]
    fn lit_hemisphere_albedo_force_is_antiparallel() {
        let sc = build_icosphere(1.0, 3, 0.35, 50.0).unwrap();
        let dir = Vector3::new(0.3, -0.5, 0.8).normalize();
        let sample = RadiationFieldSample {
            sun_dir: Vector3::x(),
            solar_pressure: 0.0,
            albedo_dir: dir,
            albedo_pressure: AlbedoPressure::Uniform(1e-6),
        };
        let w = total_radiation_wrench(&sc, &sample);
        assert!(w.force.angle(&(-dir)).to_degrees() < 1.0);
    }

    fn absorbing_error(level: u32, dir: Vector3<f64>) -> f64 {
        let sc = build_icosphere(1.0, level, 0.0, 50.0).unwrap();
        let w = total_radiation_wrench(&sc, &RadiationFieldSample::sun_only(dir, P_SUN));
        (w.force.norm() - P_SUN * PI).abs() / (P_SUN * PI)
    }

    #[test]
    fn cannonball_limit() {
        let dir = Vector3::new(0.2, 0.7, -0.4).normalize();
        assert!(absorbing_error(3, dir) < 0.01);
        assert!(absorbing_error(5, dir) < 0.005);
        let errs: Vec<f64> = (2..=5).map(|l| absorbing_error(l, dir)).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn symmetric_sphere_has_negligible_torque() {
        for level in 3..=4 {
            let sc = build_icosphere(1.0, level, 0.3, 50.0).unwrap();
            for dir in [Vector3::x(), Vector3::new(0.2, 0.7, -0.4).normalize()] {
                let w = total_radiation_wrench(&sc, &RadiationFieldSample::sun_only(dir, P_SUN));
                let ratio = w.torque.norm() / w.force.norm();
                assert!(ratio < 1e-6, "level {level}: {ratio:e}");
            }
        }
    }

    #[test]
    fn area_doubling_is_linear() {
        let mut sc = build_icosphere(1.0, 2, 0.3, 50.0).unwrap();
        let sample = RadiationFieldSample::sun_only(Vector3::new(0.1, 0.2, 0.97).normalize(), P_SUN);
        let w1 = total_radiation_wrench(&sc, &sample);
        for f in &mut sc.facets {
            f.area *= 2.0;
        }
        let w2 = total_radiation_wrench(&sc, &sample);
        assert_eq!(w2.force, w1.force * 2.0);
        assert_eq!(w2.torque, w1.torque * 2.0);
    }

    #[test]
    fn perturbation_is_seeded() {
        let mut a = build_icosphere(1.0, 1, 0.3, 50.0).unwrap();
        let mut b = a.clone();
        a.perturb_reflectivity(0.05, 9);
        b.perturb_reflectivity(0.05, 9);
        assert_eq!(a, b);
        assert!(a.facets.iter().all(|f| (f.reflectivity - 0.3).abs() <= 0.05));
    }

    #[test]
    fn facet_file_parsing() {
        let text = "# area nx ny nz rx ry rz rho\n0.5 0 0 1 0 0 0.1 0.2\n";
        let fs = parse_facets(text, Path::new("t")).unwrap();
        assert_eq!(fs.len(), 1);
        assert!(parse_facets("0.5 0 0 2 0 0 0 0.2", Path::new("t")).is_err());
        assert!(parse_facets("0.5 0 0 1", Path::new("t")).is_err());
    }

    proptest! {
        #[test]
        fn frame_covariance(
            axis in prop::array::uniform3(-1.0..1.0f64),
            angle in 0.0..3.0f64,
            s in prop::array::uniform3(-1.0..1.0f64),
            e in prop::array::uniform3(-1.0..1.0f64),
        ) {
            let axis = Vector3::from(axis);
            let s = Vector3::from(s);
            let e = Vector3::from(e);
            prop_assume!(axis.norm() > 1e-3 && s.norm() > 1e-3 && e.norm() > 1e-3);
            let q = Quaternion::from_axis_angle(&axis.normalize(), angle);
            let sc = build_icosphere(1.0, 1, 0.4, 50.0).unwrap();
            let mut rotated = sc.clone();
            for f in &mut rotated.facets {
                f.normal = q.rotate(&f.normal);
                f.position = q.rotate(&f.position);
            }
            let sample = RadiationFieldSample {
                sun_dir: s.normalize(),
                solar_pressure: 1.0,
                albedo_dir: e.normalize(),
                albedo_pressure: AlbedoPressure::Uniform(0.3),
            };
            let rsample = RadiationFieldSample {
                sun_dir: q.rotate(&sample.sun_dir),
                albedo_dir: q.rotate(&sample.albedo_dir),
                ..sample.clone()
            };
            let w = total_radiation_wrench(&sc, &sample);
            let wr = total_radiation_wrench(&rotated, &rsample);
            let scale = w.force.norm().max(1e-300);
            prop_assert!((q.rotate(&w.force) - wr.force).norm() <= 1e-12 * scale.max(1.0));
            prop_assert!((q.rotate(&w.torque) - wr.torque).norm() <= 1e-12 * scale.max(1.0));
        }
    }
}
