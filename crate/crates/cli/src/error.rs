use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A malformed cell in an input file; `row` counts data rows from 1.
    #[error("{path}: row {row}, column '{column}': {detail}")]
    Ingest { path: PathBuf, row: usize, column: String, detail: String },

    /// A problem with an input file as a whole (header, grouping, keys).
    #[error("{path}: {detail}")]
    Input { path: PathBuf, detail: String },

    #[error(transparent)]
    Model(#[from] dichogeo::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn input(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        CliError::Input { path: path.into(), detail: detail.into() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
