//! Crate-wide error type with the exit-code categories used by the CLI.

use thiserror::Error;

/// Errors produced by estimation, simulation, and IO routines.
#[derive(Debug, Error)]
pub enum Error {
    /// File-system failure while reading or writing an artifact.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed cell in an input file. Coordinates are 1-based over data rows.
    #[error("parse error at (row {row}, col {col}): {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    /// Invalid configuration, flag combination, or input shape.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical failure (non-convergence, loss of positive definiteness, degenerate input).
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code for this error category: 1 IO/parse, 2 configuration, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } => 1,
            Error::Config(_) => 2,
            Error::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
