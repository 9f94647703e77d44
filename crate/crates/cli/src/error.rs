use std::path::PathBuf;

use optswitch::solver::SolveError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {}: {message}", .path.display())]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Other(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Solve(SolveError::NonConvergence { .. }) => 3,
            CliError::Verification(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn other(e: impl std::fmt::Display) -> Self {
        CliError::Other(e.to_string())
    }
}
