use std::path::PathBuf;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input shape error: {0}")]
    Shape(String),

    #[error("numeric input error: {0}")]
    NumericInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Divergence {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
