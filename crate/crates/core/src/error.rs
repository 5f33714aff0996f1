use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("ingest error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("data generation failed: {0}")]
    Generation(String),

    #[error("training set build failed: {0}")]
    TrainingSet(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("sketch build failed: {0}")]
    Build(String),

    #[error("AQC undefined: {0}")]
    Aqc(String),

    #[error("merge failed: {0}")]
    Merge(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("grid search failed: {0}")]
    Search(String),

    #[error("network construction failed: {0}")]
    Construction(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
