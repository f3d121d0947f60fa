//! Scenario files, formation runs and their file outputs.

pub mod config;
pub mod output;
pub mod run;

pub use config::{
    sun_synchronous_inclination, ActuatorKind, Channel, ControllerConfig, FollowerConfig, InitialAttitude,
    LeaderConfig, OutputConfig, PerturbationConfig, ScenarioConfig, ScenarioKind, SlewConfig, SpacecraftConfig,
    SweepConfig, TrajoptConfig,
};
pub use output::{
    expected_rows, lvlh_deviation, write_facet_composite, write_outputs, ATTITUDE_HEADER, CONTROL_HEADER, FACET_HEADER,
    ORBIT_HEADER, TRANSFER_HEADER,
};
pub use run::{
    build_plant, initial_states, run, run_attitude, run_sweep, run_trajopt, target_for, transfer_problems, RunOptions,
    RunSummary, SpacecraftRun, SpacecraftSummary, SweepCell, TransferRun, TransferSummary,
};
