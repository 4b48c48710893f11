//! Crate-wide error type.

use crate::gae::TrainTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("column not found: {0}")]
    MissingColumn(String),

    #[error("column {column}, data row {row}: cannot convert {value:?} to a number")]
    NonNumericCell {
        column: String,
        row: usize,
        value: String,
    },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("group {0:?} has a zero target mean in the training set")]
    ZeroGroupMean(String),

    #[error("column {0} has no non-missing values to bin")]
    EmptyColumn(String),

    #[error("column {column}: value {value:?} is not in the entity catalog")]
    UnknownEntity { column: String, value: String },

    #[error("graph has {n} nodes, above the dense limit of {limit}; raise the limit explicitly")]
    TooLarge { n: usize, limit: usize },

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: u64, trace: Box<TrainTrace> },

    #[error("row has no known entities: every cell is missing or unknown")]
    NoKnownEntities,

    #[error("unsupported bundle format or version: {found:?}")]
    FormatVersionMismatch { found: String },

    #[error("bundle checksum mismatch: file is truncated or corrupt")]
    ChecksumMismatch,

    #[error("a neighbor has distance zero; the unnormalized prediction is undefined")]
    ZeroDistance,

    #[error("both classes must be present to compute an AUC")]
    SingleClass,

    #[error("empty input")]
    EmptyInput,

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("classification target values must be 0 or 1, got {0}")]
    NonBinaryTarget(f64),
}
