//! CLI error type with a stable exit-code contract: 2 for config/usage
//! problems, 3 for numeric failures, 4 for data incompatibilities.

use seqtag_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match &err {
            CoreError::Config(_) | CoreError::Argument(_) | CoreError::Io(_) => {
                CliError::Config(err.to_string())
            }
            CoreError::Diverged { .. }
            | CoreError::Dimension { .. }
            | CoreError::Domain { .. }
            | CoreError::State(_) => CliError::Numeric(err.to_string()),
            CoreError::Parse { .. } | CoreError::Data(_) | CoreError::Incompatible(_) => {
                CliError::Data(err.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Config(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
