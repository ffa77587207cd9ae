//! Crate-wide error type.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    Domain(String),

    /// Run-configuration parse or validation failure. Carries the offending
    /// field so the CLI can point at it.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// Least-squares engine failed to converge or produced a singular system.
    #[error("fit error: {0}")]
    Fit(String),

    /// Numerical integration left the valid state space.
    #[error("integration error: {0}")]
    Integration(String),

    /// Rate-coefficient calibration could not bracket the target.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Binary time-tag format violation, with the byte offset where the
    /// stream became unreadable.
    #[error("time-tag format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config { .. } | Error::Format { .. } | Error::Io { .. } => 2,
            Error::Fit(_) | Error::Calibration(_) | Error::Integration(_) => 3,
        }
    }
}
