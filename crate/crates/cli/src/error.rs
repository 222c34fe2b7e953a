use std::path::PathBuf;

use dams_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    pub const DIVERGENCE: i32 = 5;
    pub const DATA: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("configuration error in {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigFile { .. } | CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } | CliError::Malformed { .. } => exit::IO,
            CliError::Core(e) => match e {
                CoreError::Config(_) => exit::CONFIG,
                CoreError::Io { .. } => exit::IO,
                CoreError::Divergence { .. } => exit::DIVERGENCE,
                CoreError::Shape(_)
                | CoreError::NumericInput(_)
                | CoreError::Input(_)
                | CoreError::Precondition(_)
                | CoreError::EmptyDataset(_)
                | CoreError::UndefinedMetric(_)
                | CoreError::Parse { .. } => exit::DATA,
            },
        }
    }
}
