use thiserror::Error;

use jointdx_core::Error as CoreError;

/// Command failure, carrying the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or output path (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input data (exit 3).
    #[error("{0}")]
    Data(String),
    /// Non-finite values or other numeric breakdown (exit 4).
    #[error("{0}")]
    Numeric(String),
    /// At least one gradient configuration exceeded the tolerance (exit 1).
    #[error("gradient check failed")]
    GradCheck,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::GradCheck => 1,
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite(_) | CoreError::Domain(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
