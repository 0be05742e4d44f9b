use thiserror::Error;

use crate::geometry::PointId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate is not finite")]
    NonFiniteCoordinate,

    #[error("duplicate point: coordinates equal to alive point {0}")]
    DuplicatePoint(PointId),

    #[error("point {0} is not alive")]
    DeadPoint(PointId),

    #[error("identical points have no bucket")]
    IdenticalPoints,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("instance too large for exhaustive enumeration: n = {0}")]
    InstanceTooLarge(usize),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
