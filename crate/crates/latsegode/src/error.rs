//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a documented precondition (shape mismatch, bad range, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numerical operation produced non-finite or otherwise unusable values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative solver ran out of its step budget.
    #[error("solver did not converge: {msg} (last reached t = {t_reached})")]
    NonConvergence { t_reached: f64, msg: String },

    /// A segment became empty or too short to score.
    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),

    /// A file exists but its contents do not match the expected layout.
    #[error("malformed file {path}: {msg}")]
    MalformedFile { path: String, msg: String },

    /// Checkpoint or dataset written by an incompatible format version.
    #[error("format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for the CLI: 2 invalid config, 3 numerical, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Numerical(_) | Error::NonConvergence { .. } | Error::DegenerateSegment(_) => 3,
            Error::MalformedFile { .. }
            | Error::VersionMismatch { .. }
            | Error::Io(_)
            | Error::Json(_) => 4,
        }
    }
}
