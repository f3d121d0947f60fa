use std::path::PathBuf;

use crate::frames::Frame;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("quaternion is not unit (norm {norm})")]
    InvalidQuaternion { norm: f64 },

    #[error("degenerate frame: {0}")]
    DegenerateFrame(&'static str),

    #[error("cannot combine a {left:?} vector with a {right:?} vector")]
    FrameMismatch { left: Frame, right: Frame },

    #[error("position radius {radius} m is at or below the reference radius {limit} m")]
    BelowSurface { radius: f64, limit: f64 },

    #[error("altitude {altitude} m is below the atmosphere table floor {floor} m")]
    AltitudeOutOfRange { altitude: f64, floor: f64 },

    #[error("third-body singularity: spacecraft coincides with the perturbing body")]
    ThirdBodySingularity,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("propagation failed at t = {time} s: {reason}")]
    Propagation { time: f64, reason: String },

    #[error("infeasible reference: node {node} coincides with the leader")]
    InfeasibleReference { node: usize },

    #[error("optimizer did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl Error {
    /// Process exit code: 2 configuration, 3 propagation, 4 optimizer, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::InvalidQuaternion { .. } | Error::FrameMismatch { .. } => 2,
            Error::DegenerateFrame(_)
            | Error::BelowSurface { .. }
            | Error::AltitudeOutOfRange { .. }
            | Error::ThirdBodySingularity
            | Error::Propagation { .. } => 3,
            Error::InfeasibleReference { .. } | Error::NotConverged(_) => 4,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}
