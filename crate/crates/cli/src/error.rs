use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("solver error: {0}")]
    Solver(#[from] mastereq_core::Error),

    #[error("check `{check}` aborted: {source}")]
    Check {
        check: String,
        #[source]
        source: mastereq_core::Error,
    },

    #[error("{failed} verification check(s) failed; see {report}")]
    VerificationFailed { failed: usize, report: PathBuf },
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Solver(_) | CliError::Check { .. } => 2,
            CliError::VerificationFailed { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
