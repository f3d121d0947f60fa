pub mod constants;
pub mod control;
pub mod environment;
pub mod error;
pub mod facet;
pub mod frames;
pub mod geopotential;
pub mod perturbations;
pub mod propagator;
pub mod scenario;
pub mod trajopt;
