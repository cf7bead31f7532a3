use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("degenerate embedding: pre-normalization norm {norm:e} below 1e-12")]
    DegenerateEmbedding { norm: f64 },

    #[error("degenerate similarity: zero-norm vector")]
    DegenerateSimilarity,

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("batch loss error: {0}")]
    BatchLoss(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable kind tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Argument(_) => "argument",
            Error::DegenerateEmbedding { .. } => "degenerate_embedding",
            Error::DegenerateSimilarity => "degenerate_similarity",
            Error::Sampling(_) => "sampling",
            Error::BatchLoss(_) => "batch_loss",
            Error::Training(_) => "training",
            Error::Usage(_) => "usage",
            Error::Format(_) => "format",
            Error::Context { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
