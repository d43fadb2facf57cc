use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Core(#[from] ccqm_core::Error),

    #[error("i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("artifact {path}: {detail}")]
    Artifact { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NUMERIC: i32 = 2;
    pub const PROPERTY: i32 = 3;
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(e) if e.is_numeric() => exit::NUMERIC,
            _ => exit::CONFIG,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
