//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("file format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("{path}: unsupported version {found}, expected {expected}")]
    Version {
        path: String,
        found: u32,
        expected: u32,
    },

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("rollout {id} failed: {reason}")]
    Rollout { id: u64, reason: String },

    #[error("missing artifact for {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for config/usage problems, 3 for
    /// missing or mismatched artifacts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Format { .. }
            | Error::Checksum(_)
            | Error::Version { .. }
            | Error::MissingArtifact(_)
            | Error::DimMismatch { .. } => 3,
            _ => 1,
        }
    }
}
