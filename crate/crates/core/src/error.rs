use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gradient oracle: {0}")]
    Oracle(String),

    #[error("failed to load {path}: {msg}")]
    Load { path: PathBuf, msg: String },

    #[error("labels unavailable: {0}")]
    LabelsUnavailable(String),

    #[error("undefined direction: {0}")]
    UndefinedDirection(String),

    #[error("loss composition: {0}")]
    Composition(String),

    #[error("clustering: {0}")]
    Clustering(String),

    #[error("inference: {0}")]
    Inference(String),

    #[error("evaluation unavailable: {0}")]
    EvaluationUnavailable(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        op,
        detail: detail.into(),
    }
}
