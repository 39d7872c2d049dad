//! Error type shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate value range: max ({max}) must exceed min ({min})")]
    DegenerateRange { min: f64, max: f64 },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("provenance violation: {0}")]
    Provenance(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Dataset(_) => "dataset",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::DegenerateRange { .. } => "degenerate_range",
            Error::Partition(_) => "partition",
            Error::Diverged { .. } => "diverged",
            Error::Provenance(_) => "provenance",
            Error::Checkpoint(_) => "checkpoint",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
