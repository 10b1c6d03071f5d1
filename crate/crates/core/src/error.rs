//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("malformed line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("victim registry: {0}")]
    Registry(String),

    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("tokenizer error: {0}")]
    Tokenizer(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metric input error: {0}")]
    Metric(String),

    #[error("transport error after {retries} attempt(s): {msg}")]
    Transport { msg: String, retries: usize },

    #[error("alignment failed: {0}")]
    AlignFail(String),

    #[error("audit error: {0}")]
    Audit(String),

    #[error("run error: {0}")]
    Run(String),
}

pub type Result<T> = std::result::Result<T, Error>;
