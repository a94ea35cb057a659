use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("execution failed: {0}")]
    Execution(String),
    #[error("tasks did not complete: {}", .0.join(", "))]
    ExecutionFailed(Vec<String>),
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn config(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}
