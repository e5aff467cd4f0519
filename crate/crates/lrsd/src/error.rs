use std::path::Path;

use thiserror::Error;

use crate::matfile::MatError;

/// Failure of a CLI command, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, config or spec.
    #[error("{0}")]
    Usage(String),
    /// A solver hit a non-finite value or a singular system.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// Unreadable or inconsistent files.
    #[error("{0}")]
    Format(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } | CliError::Format(_) => 1,
        }
    }
}

impl From<lrsd_core::Error> for CliError {
    fn from(e: lrsd_core::Error) -> Self {
        use lrsd_core::Error as E;
        match e {
            E::InvalidArgument(m) => CliError::Usage(m),
            E::Numeric(m) => CliError::Numeric(m),
            e @ (E::Shape { .. } | E::Protocol(_)) => CliError::Format(e.to_string()),
        }
    }
}

impl From<MatError> for CliError {
    fn from(e: MatError) -> Self {
        match e {
            MatError::Io { path, source } => CliError::Io { path, source },
            e => CliError::Format(e.to_string()),
        }
    }
}
