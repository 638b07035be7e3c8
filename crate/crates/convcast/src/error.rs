//! Crate-wide error type.

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // CSV ingestion
    #[error("missing or unexpected header line, expected `{expected}`")]
    MissingHeader { expected: &'static str },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate date {0} in input data")]
    DuplicateDate(NaiveDate),
    #[error("no valid data rows in input")]
    EmptySeries,

    // Dataset construction
    #[error("series of length {len} is too short for window length {window} (need window + 1)")]
    SeriesTooShort { len: usize, window: usize },
    #[error("split ratios {0:?} are invalid: must be positive and sum to 1")]
    BadRatios([f64; 3]),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    // Tensor / layer algebra
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("kernel length {kernel} exceeds input length {input}")]
    KernelTooLong { kernel: usize, input: usize },
    #[error("backward called without a matching forward pass")]
    StaleCache,

    // Training / evaluation
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("non-finite {0} encountered during training")]
    NonFinite(&'static str),
    #[error("unknown model spec `{0}` (expected one of fc1, fc2, rnn1, rnn1fc, rnn2, lstm1, conv1, conv1fc)")]
    UnknownSpec(String),

    // Configuration / IO
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
