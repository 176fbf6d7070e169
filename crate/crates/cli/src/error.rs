use thiserror::Error;

use urllc_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{0}")]
    Scenario(String),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Io(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 0 success, 2 validation, 3 infeasible, 4 state space too large.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoreError::Infeasible(_)) => 3,
            CliError::Core(CoreError::StateSpace { .. }) => 4,
            CliError::Core(_) | CliError::Scenario(_) | CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}
