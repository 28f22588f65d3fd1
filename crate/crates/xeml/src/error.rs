//! Toolkit error type with the CLI's stable exit-code mapping.

use std::path::{Path, PathBuf};

use xeml_core::CoreError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// Malformed input file (PPM, checkpoint, manifest, config).
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Error {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, detail: impl Into<String>) -> Error {
        Error::Format {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }

    /// Exit code contract: 2 for configuration/usage problems (including
    /// unusable input files), 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format { .. } => 2,
            Error::Core(core) => match core {
                CoreError::Config(_)
                | CoreError::Mode(_)
                | CoreError::Homogeneity { .. }
                | CoreError::Sampling { .. } => 2,
                _ => 1,
            },
            Error::Io { .. } => 1,
        }
    }
}
