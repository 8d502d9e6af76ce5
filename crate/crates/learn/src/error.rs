use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Core(#[from] dynfold_core::Error),
    /// Retryable: collect more experience first.
    #[error("replay buffer holds {have} transitions, {need} needed")]
    NotReady { have: usize, need: usize },
    #[error("non-finite {what} ({value})")]
    NonFinite { what: String, value: f64 },
    #[error("observation does not match the network: {0}")]
    Contract(String),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;
