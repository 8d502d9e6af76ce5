//! Front end for the dynamic fold pipeline: configuration, commands, reports
//! and the rank test used to compare evaluation runs.

pub mod commands;
pub mod config;
pub mod report;
pub mod stats;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration detected before any work starts.
    #[error("{0}")]
    Usage(String),
    #[error("missing file {}: {what}", path.display())]
    MissingFile { path: PathBuf, what: &'static str },
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Core(#[from] dynfold_core::Error),
    #[error(transparent)]
    Learn(#[from] dynfold_learn::LearnError),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::MissingFile { .. } | CliError::Toml(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
