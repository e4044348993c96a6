use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DsmcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A particle would leave the domain a second time within one step.
    #[error("particle {index} crossed the boundary more than once in step {step} (x = {x})")]
    MultipleCrossing { step: usize, index: usize, x: f64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("corrupted tape: {0}")]
    CorruptedTape(String),
}

pub type Result<T> = std::result::Result<T, DsmcError>;
