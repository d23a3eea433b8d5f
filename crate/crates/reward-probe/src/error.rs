use std::path::{Path, PathBuf};

use reward_probe_core as core_;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes; stable for scripting.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: core_::Error,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] core_::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(path: &Path, source: core_::Error) -> Self {
        Error::Data {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => exit::IO,
            Error::Core(core_::Error::Divergence { .. }) => exit::DIVERGED,
            Error::Core(core_::Error::Config { .. }) => exit::USAGE,
            Error::Core(core_::Error::Shape { .. }) => exit::USAGE,
            Error::Config(_) | Error::Usage(_) => exit::USAGE,
            Error::Data { .. } | Error::Format { .. } => exit::USAGE,
            Error::Core(_) => exit::USAGE,
        }
    }
}
