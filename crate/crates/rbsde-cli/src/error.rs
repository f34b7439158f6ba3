use thiserror::Error;

use rbsde_core::Error as CoreError;

/// CLI failure classes, each mapping to a distinct exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable file, malformed JSON or cross-field validation failure.
    #[error("config error: {0}")]
    Parse(String),

    /// Structurally valid config describing an inadmissible problem.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The solver gave up (root finding, driver blow-up).
    #[error("solver failure: {0}")]
    Solver(String),

    /// A verification check reported violations.
    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Precondition(_) | CliError::Io(_) => 3,
            CliError::Solver(_) => 4,
            CliError::CheckFailed(_) => 5,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NoRoot { .. } | CoreError::DriverEval { .. } => {
                CliError::Solver(e.to_string())
            }
            other => CliError::Precondition(other.to_string()),
        }
    }
}
