//! Scenario file schema.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::{MU_EARTH, R_EARTH};
use crate::control::{AttitudeTarget, MagnetorquerBank, MagnetorquerLaw, MomentumDump, PdGains, ReactionWheelSet};
use crate::error::{Error, Result};
use crate::frames::{Epoch, OrbitalElements, Quaternion};
use crate::perturbations::{AccelToggles, RadiationModel, ThirdBodyForm, TorqueToggles};
use crate::propagator::IntegratorConfig;
use crate::trajopt::{ControlBound, CostKind, DynamicsModel, ScpSettings};

/// J2 of the Earth, used only for the sun-synchronous default inclination.
const J2: f64 = 1.082_626_68e-3;
/// Mean motion of the Sun about the Earth, rad/s.
const SUN_MEAN_MOTION: f64 = 2.0 * std::f64::consts::PI / (365.2422 * 86_400.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    ScenarioI,
    ScenarioIi,
    Sweep,
    Trajopt,
    Custom,
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ScenarioI => "SCENARIO_I",
            Self::ScenarioIi => "SCENARIO_II",
            Self::Sweep => "SWEEP",
            Self::Trajopt => "TRAJOPT",
            Self::Custom => "CUSTOM",
        })
    }
}

/// Inclination of a circular sun-synchronous orbit of radius `a`, rad.
pub fn sun_synchronous_inclination(a: f64) -> f64 {
    let cos_i = -2.0 * a.powf(3.5) * SUN_MEAN_MOTION / (3.0 * J2 * R_EARTH * R_EARTH * MU_EARTH.sqrt());
    cos_i.clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeaderConfig {
    /// Altitude of the semi-major axis above the equatorial radius, m.
    pub altitude: f64,
    pub eccentricity: f64,
    /// Degrees; sun-synchronous for the given altitude when absent.
    pub inclination: Option<f64>,
    pub raan: f64,
    pub arg_perigee: f64,
    pub true_anomaly: f64,
}

impl Default for LeaderConfig {
    fn default() -> Self {
        Self {
            altitude: 600e3,
            eccentricity: 0.0,
            inclination: None,
            raan: 0.0,
            arg_perigee: 0.0,
            true_anomaly: 0.0,
        }
    }
}

impl LeaderConfig {
    pub fn elements(&self) -> OrbitalElements {
        let a = R_EARTH + self.altitude;
        OrbitalElements {
            a,
            e: self.eccentricity,
            i: self
                .inclination
                .map_or_else(|| sun_synchronous_inclination(a), f64::to_radians),
            raan: self.raan.to_radians(),
            argp: self.arg_perigee.to_radians(),
            nu: self.true_anomaly.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerConfig {
    /// Relative position in the leader LVLH frame, m.
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Transfer target for trajectory optimization.
    #[serde(default)]
    pub target_position: Option<[f64; 3]>,
    #[serde(default)]
    pub target_velocity: Option<[f64; 3]>,
}

fn default_followers() -> Vec<FollowerConfig> {
    [-1000.0, -2000.0, -3000.0]
        .iter()
        .map(|&y| FollowerConfig {
            position: [0.0, y, 0.0],
            velocity: [0.0; 3],
            target_position: None,
            target_velocity: None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpacecraftConfig {
    /// kg.
    pub mass: f64,
    /// m.
    pub radius: f64,
    pub subdivision: u32,
    pub reflectivity: f64,
    pub drag_coefficient: f64,
    /// Centre of pressure relative to the centre of mass, BODY, m.
    pub cp_offset: [f64; 3],
    /// Principal moments, kg·m²; thin spherical shell when absent.
    pub inertia: Option<[f64; 3]>,
    /// Facet table replacing the icosphere.
    pub facets_file: Option<PathBuf>,
}

impl Default for SpacecraftConfig {
    fn default() -> Self {
        Self {
            mass: 50.0,
            radius: 1.0,
            subdivision: 2,
            reflectivity: 0.3,
            drag_coefficient: 2.2,
            cp_offset: [0.002, 0.001, -0.001],
            inertia: None,
            facets_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub accel: AccelToggles,
    pub torque: TorqueToggles,
    pub radiation: RadiationModel,
    pub third_body_form: ThirdBodyForm,
    pub gravity_degree: usize,
    pub gravity_order: usize,
    /// N·m, BODY; applied when the bias torque toggle is on.
    pub bias_torque: [f64; 3],
    /// Hold the Sun and Moon at the start epoch; on by default for Scenario I.
    pub frozen_epoch: Option<bool>,
    pub albedo_bands: usize,
    pub eta_e: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            accel: AccelToggles::default(),
            torque: TorqueToggles::default(),
            radiation: RadiationModel::Lumped,
            third_body_form: ThirdBodyForm::Differential,
            gravity_degree: 8,
            gravity_order: 8,
            bias_torque: [0.0; 3],
            frozen_epoch: None,
            albedo_bands: 36,
            eta_e: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuatorKind {
    Magnetorquer,
    #[default]
    ReactionWheels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub kind: ActuatorKind,
    pub magnetorquer_law: MagnetorquerLaw,
    /// Torque gains (dipole gains under the scalar law).
    pub magnetorquer_gains: PdGains,
    /// Torque gains, N·m per unit quaternion error and per rad/s.
    pub wheel_gains: PdGains,
    pub magnetorquer: MagnetorquerBank,
    pub wheels: ReactionWheelSet,
    pub dump: MomentumDump,
    /// Attitude target for `CUSTOM` runs.
    pub target: AttitudeTarget,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: ActuatorKind::ReactionWheels,
            magnetorquer_law: MagnetorquerLaw::FieldProjected,
            // critically damped for the default 50 kg, 1 m shell
            magnetorquer_gains: PdGains::critically_damped(1e-4, 100.0 / 3.0),
            wheel_gains: PdGains::critically_damped(0.05, 100.0 / 3.0),
            magnetorquer: MagnetorquerBank::default(),
            wheels: ReactionWheelSet::default(),
            dump: MomentumDump::default(),
            target: AttitudeTarget::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialAttitude {
    /// Rotation of the start attitude away from the target, deg.
    pub offset_angle: f64,
    /// Axis of that rotation, BODY.
    pub offset_axis: [f64; 3],
    /// Body rate added to the target rate, rad/s, BODY.
    pub rate: [f64; 3],
}

impl Default for InitialAttitude {
    fn default() -> Self {
        Self {
            offset_angle: 0.0,
            offset_axis: [1.0, 0.0, 0.0],
            rate: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlewConfig {
    /// Start attitude as an axis-angle rotation from ECI, deg.
    pub start_axis: [f64; 3],
    pub start_angle: f64,
    pub end_axis: [f64; 3],
    pub end_angle: f64,
    /// Band the error must enter and stay in to count as settled, deg.
    pub settle_band: f64,
    /// Time the error must stay in the band, s.
    pub hold: f64,
    /// Terminal error required to meet the manoeuvre, deg.
    pub terminal_tolerance: f64,
}

impl Default for SlewConfig {
    fn default() -> Self {
        Self {
            start_axis: [1.0, 0.0, 0.0],
            start_angle: 0.0,
            end_axis: [1.0, 1.0, 1.0],
            end_angle: 30.0,
            settle_band: 1.0,
            hold: 600.0,
            terminal_tolerance: 0.01,
        }
    }
}

pub(crate) fn axis_angle(axis: [f64; 3], angle_deg: f64) -> Result<Quaternion> {
    let a = Vector3::from(axis);
    if angle_deg == 0.0 {
        return Ok(Quaternion::identity());
    }
    if !(a.norm() > 0.0) {
        return Err(Error::config("rotation axis must be non-zero"));
    }
    Ok(Quaternion::from_axis_angle(&a.normalize(), angle_deg.to_radians()))
}

impl SlewConfig {
    pub fn start(&self) -> Result<Quaternion> {
        axis_angle(self.start_axis, self.start_angle)
    }

    pub fn end(&self) -> Result<Quaternion> {
        axis_angle(self.end_axis, self.end_angle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub coils: Vec<u32>,
    /// Dipole capacity of one coil, A·m².
    pub intensity: Vec<f64>,
    /// Target spin rate about the orbit normal, rad/s.
    pub spin_rate: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            coils: vec![1, 2, 3, 4],
            intensity: vec![0.5, 1.0, 2.0, 4.0],
            spin_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajoptConfig {
    pub nodes: usize,
    /// Node spacing, s.
    pub dt: f64,
    /// m/s².
    pub u_max: f64,
    /// m.
    pub r_col: f64,
    pub bound: ControlBound,
    pub cost: CostKind,
    pub dynamics: DynamicsModel,
    pub scp: ScpSettings,
    /// Largest propagator step of the nonlinear replay, s.
    pub replay_step: f64,
}

impl Default for TrajoptConfig {
    fn default() -> Self {
        Self {
            nodes: 60,
            dt: 30.0,
            u_max: 1e-3,
            r_col: 100.0,
            bound: ControlBound::Polytope,
            cost: CostKind::Energy,
            dynamics: DynamicsModel::Corrected,
            scp: ScpSettings::default(),
            replay_step: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Orbit,
    Attitude,
    Control,
    Breakdown,
    FacetComposite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Keep every `stride`-th integrator step.
    pub stride: usize,
    pub channels: Vec<Channel>,
    /// Times of the per-facet composite snapshots, s from the start.
    pub facet_times: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            stride: 10,
            channels: vec![Channel::Orbit, Channel::Attitude, Channel::Control, Channel::Breakdown],
            facet_times: Vec::new(),
        }
    }
}

fn default_integrator() -> IntegratorConfig {
    IntegratorConfig {
        dt: 1.0,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    /// Start epoch, s past J2000.
    #[serde(default)]
    pub epoch: Epoch,
    /// Simulated time, s; one leader orbit when absent (three for Scenario II).
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub leader: LeaderConfig,
    #[serde(default = "default_followers")]
    pub followers: Vec<FollowerConfig>,
    #[serde(default)]
    pub spacecraft: SpacecraftConfig,
    #[serde(default)]
    pub perturbations: PerturbationConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub initial_attitude: InitialAttitude,
    #[serde(default)]
    pub slew: SlewConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub trajopt: TrajoptConfig,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            epoch: Epoch::J2000,
            duration: None,
            leader: LeaderConfig::default(),
            followers: default_followers(),
            spacecraft: SpacecraftConfig::default(),
            perturbations: PerturbationConfig::default(),
            controller: ControllerConfig::default(),
            initial_attitude: InitialAttitude::default(),
            slew: SlewConfig::default(),
            sweep: SweepConfig::default(),
            trajopt: TrajoptConfig::default(),
            integrator: default_integrator(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Simulated time, s.
    pub fn duration(&self) -> f64 {
        let orbits = if self.scenario == ScenarioKind::ScenarioIi {
            3.0
        } else {
            1.0
        };
        self.duration
            .unwrap_or_else(|| orbits * self.leader.elements().period(MU_EARTH))
    }

    /// Sun and Moon frozen at the start epoch.
    pub fn frozen_epoch(&self) -> bool {
        self.perturbations
            .frozen_epoch
            .unwrap_or(self.scenario == ScenarioKind::ScenarioI)
    }

    pub fn validate(&self) -> Result<()> {
        self.leader.elements().validate()?;
        if self.leader.altitude <= 0.0 {
            return Err(Error::config("leader altitude must be positive"));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("duration must be positive"));
            }
        }
        self.integrator.validate()?;
        if self.output.stride == 0 {
            return Err(Error::config("output stride must be at least 1"));
        }
        let sc = &self.spacecraft;
        if !(sc.mass > 0.0 && sc.radius > 0.0) {
            return Err(Error::config("spacecraft mass and radius must be positive"));
        }
        if !(0.0..=1.0).contains(&sc.reflectivity) {
            return Err(Error::config("reflectivity must lie in [0, 1]"));
        }
        if let Some(j) = sc.inertia {
            if j.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::config("principal moments must be positive"));
            }
        }
        let p = &self.perturbations;
        if p.gravity_order > p.gravity_degree {
            return Err(Error::config("gravity order exceeds degree"));
        }
        let c = &self.controller;
        c.magnetorquer.validate()?;
        c.wheels.validate()?;
        c.dump.bank.validate()?;
        for g in [c.magnetorquer_gains, c.wheel_gains] {
            if !(g.kp >= 0.0 && g.kd >= 0.0) {
                return Err(Error::config("controller gains must be non-negative"));
            }
        }
        match self.scenario {
            ScenarioKind::Sweep => {
                let s = &self.sweep;
                if s.coils.is_empty() || s.intensity.is_empty() {
                    return Err(Error::config("sweep grid is empty"));
                }
                if s.coils.contains(&0) || s.intensity.iter().any(|x| !(*x > 0.0)) {
                    return Err(Error::config("sweep coil counts and intensities must be positive"));
                }
            }
            ScenarioKind::ScenarioIi => {
                self.slew.start()?;
                self.slew.end()?;
                if !(self.slew.settle_band > 0.0 && self.slew.terminal_tolerance > 0.0 && self.slew.hold >= 0.0) {
                    return Err(Error::config("slew band, hold and tolerance must be positive"));
                }
            }
            ScenarioKind::Trajopt => {
                if self.followers.is_empty() {
                    return Err(Error::config("trajectory optimization needs at least one follower"));
                }
                if self.followers.iter().any(|f| f.target_position.is_none()) {
                    return Err(Error::config("every follower needs a target_position"));
                }
                let t = &self.trajopt;
                if t.nodes < 2 || !(t.dt > 0.0 && t.u_max > 0.0 && t.r_col >= 0.0 && t.replay_step > 0.0) {
                    return Err(Error::config("invalid trajectory optimization settings"));
                }
                for (i, f) in self.followers.iter().enumerate() {
                    for p in [Some(f.position), f.target_position].into_iter().flatten() {
                        if Vector3::from(p).norm() <= t.r_col {
                            return Err(Error::config(format!(
                                "follower {} has an endpoint inside the {} m keep-out sphere",
                                i + 1,
                                t.r_col
                            )));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Informational warnings that do not stop a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.followers.len();
        if !(3..=6).contains(&n) {
            out.push(format!(
                "{n} followers; formations are normally three to six spacecraft"
            ));
        }
        out
    }

    /// SHA-256 of the resolved configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = None;
        let json = serde_json::to_string(&c).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
