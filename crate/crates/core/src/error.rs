use thiserror::Error;

use crate::tensor::Mode;

/// Errors produced by tensor operations, recursions and decompositions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in mode {mode}: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        context: &'static str,
        mode: Mode,
        expected: usize,
        found: usize,
    },

    #[error("contraction modes must be distinct (got mode {0} twice)")]
    EqualModes(Mode),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("factor for mode {mode} is not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { mode: Mode, deviation: f64 },

    #[error("breakdown in mode {mode} at step {step} (residual {residual:.3e})")]
    Breakdown {
        mode: Mode,
        step: usize,
        residual: f64,
    },

    #[error("rank {rank} exceeds available dimension {available} in mode {mode}")]
    RankExceeds {
        mode: Mode,
        rank: usize,
        available: usize,
    },

    #[error("core norm {core:.6e} exceeds tensor norm {tensor:.6e}")]
    ProjectionBound { core: f64, tensor: f64 },

    #[error("tensor is identically zero")]
    ZeroTensor,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("archive: {0}")]
    Archive(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn mismatch(context: &'static str, mode: Mode, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            mode,
            expected,
            found,
        }
    }
}
