//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid waveform feature id {0}")]
    InvalidFeature(usize),

    #[error("unknown diagnosis phrase {0:?}")]
    UnknownDiagnosis(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated signal blob: record {record} needs {needed} bytes, {available} available")]
    Truncated {
        record: usize,
        needed: usize,
        available: usize,
    },

    #[error("version mismatch: file has version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("corrupted file: {0}")]
    Corruption(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate (zero-norm) vector at row {row}")]
    DegenerateVector { row: usize },

    #[error("numeric failure: non-finite value in {tensor}")]
    NumericFailure { tensor: String },

    #[error("training aborted at step {step}: {source}")]
    TrainingStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("could not parse a feature list from reply: {raw:?}")]
    Parse { raw: String },

    #[error("empty evaluation: {0}")]
    EmptyEvaluation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
