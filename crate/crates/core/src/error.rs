use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("csv row {row}: label {value:?} is not 0 or 1")]
    NonBinaryLabel { row: usize, value: String },
    #[error("csv row {row}, column {column}: non-finite value")]
    NonFiniteValue { row: usize, column: String },
    #[error("csv header: {0}")]
    BadHeader(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset needs both classes, found {positives} positive and {negatives} negative samples")]
    SingleClass { positives: usize, negatives: usize },
    #[error("class {label} has {count} samples, fewer than the {required} required")]
    ClassTooSmall { label: u8, count: usize, required: usize },
    #[error("dataset must be normalized before resampling")]
    NotNormalized,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("unknown model kind {0:?}")]
    UnknownModelKind(String),
    #[error("unknown hyperparameter {name:?} for model {kind}")]
    UnknownHyperparameter { kind: String, name: String },
    #[error("k = {k} exceeds the {available} available neighbors")]
    TooManyNeighbors { k: usize, available: usize },
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("report schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than a
    /// failure during the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::UnknownModelKind(_)
                | Error::UnknownHyperparameter { .. }
                | Error::InvalidArgument(_)
                | Error::SchemaVersion { .. }
        )
    }
}
