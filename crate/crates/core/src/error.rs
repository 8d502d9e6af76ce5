use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value at point {index}: {what}")]
    Numeric { index: usize, what: String },
    #[error("point cannot be projected: {0}")]
    Projection(String),
    #[error("scripted expert failed: {0}")]
    Expert(String),
    #[error("identification failed: only {finite} of {required} candidates scored finite ({failures:?})")]
    Identification {
        finite: usize,
        required: usize,
        failures: Vec<usize>,
    },
    #[error("episode not active; call reset first")]
    EpisodeInactive,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
