use thiserror::Error;

/// Errors raised by the replay engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class index {index} out of range for {classes} classes")]
    InvalidClass { index: usize, classes: usize },

    #[error("target kind does not match the model head")]
    TargetKind,

    #[error("standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
