use dsmc_core::DsmcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },

    #[error(transparent)]
    Solver(#[from] DsmcError),
}

impl CliError {
    /// Process exit status: 2 for bad input, 3 for output failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::InvalidArgument(_) => 2,
            CliError::Solver(DsmcError::InvalidArgument(_) | DsmcError::InvalidConfig(_)) => 2,
            CliError::Output { .. } => 3,
            CliError::Solver(_) => 1,
        }
    }

    pub(crate) fn output(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Output { path: path.display().to_string(), message: err.to_string() }
    }
}
