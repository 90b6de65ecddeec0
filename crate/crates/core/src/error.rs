use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UfceError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot read `{value}` as a number")]
    Parse { row: usize, column: String, value: String },

    #[error("column `{column}` has {count} distinct codes; only binary categorical features are supported")]
    UnsupportedCardinality { column: String, count: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("no training rows carry the desired label {label}; a counterfactual cannot be built")]
    DesiredSpaceEmpty { label: u8 },

    #[error("training labels contain a single class ({label}); a classifier cannot be fitted")]
    DegenerateLabels { label: u8 },

    #[error("instance is already classified as the desired label {label}; nothing to explain")]
    NothingToExplain { label: u8 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl UfceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UfceError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = UfceError> = std::result::Result<T, E>;
