use thiserror::Error;

/// Front-end failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("io: {0}")]
    Io(String),
    #[error("every grid point failed ({0} rows)")]
    AllRowsFailed(usize),
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
    #[error("{0} gating check(s) failed")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Domain(_) => 64,
            CliError::Io(_) => 74,
            CliError::AllRowsFailed(_) => 2,
            CliError::OptimizationFailed(_) => 3,
            CliError::ValidationFailed(_) => 1,
        }
    }
}

impl From<fqt_core::Error> for CliError {
    fn from(e: fqt_core::Error) -> Self {
        match e {
            fqt_core::Error::OptimizationFailed(m) => CliError::OptimizationFailed(m),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
