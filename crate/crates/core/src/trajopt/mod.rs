//! Follower transfer optimization about a circular leader.

pub mod cw;
pub mod qp;
pub mod scp;
pub mod validate;

pub use cw::{
    cw_input, cw_matrix, cw_stm, linearize_dynamics, nonlinear_rollout, DiscreteStep, LeaderOrbit, Linearization,
};
pub use qp::{solve_qp, solve_qp_warm, BallBlock, QpProblem, QpReport, QpSettings, QpSolution, QpStatus, QpWorkspace};
pub use scp::{
    build_subproblem, polytope_normals, solve_followers, solve_scp, ControlBound, ConvexSubproblem, CostKind,
    DynamicsModel, Reference, ScpSettings, ScpSolution, SolveReport, TranscriptionProblem,
};
pub use validate::{validate_on_nonlinear, DefectReport};
