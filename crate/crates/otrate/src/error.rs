use thiserror::Error;

use otrate_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type HarnessResult<T> = Result<T, HarnessError>;

impl HarnessError {
    /// Process exit code: 2 for invariant violations, 3 for solver
    /// non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(e) => match e.root() {
                CoreError::InvariantViolation(_) | CoreError::InvalidMeasure(_) => 2,
                CoreError::NotConverged { .. } => 3,
                _ => 1,
            },
            _ => 1,
        }
    }
}
