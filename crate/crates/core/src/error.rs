use thiserror::Error;

/// Errors raised by the time-frequency toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shift {0} is not on the sampling lattice")]
    OffLattice(f64),

    #[error("window has zero norm")]
    ZeroWindow,

    #[error("invalid exponent {0}: must lie in (0, inf]")]
    InvalidExponent(f64),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("quantization matrix is not half-integer: {0}")]
    IncompatibleQuantization(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerically singular matrix (condition number {0:e})")]
    Singular(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
