use thiserror::Error;

/// Failures mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("output: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Unsupported(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    /// For errors raised while interpreting user input.
    pub fn config(e: sverl::Error) -> Self {
        match e {
            sverl::Error::UnsupportedObservation(_) => CliError::Unsupported(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }

    /// For errors raised by solvers and characteristic evaluation.
    pub fn solver(e: sverl::Error) -> Self {
        match e {
            sverl::Error::UnsupportedObservation(_) => CliError::Unsupported(e.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
