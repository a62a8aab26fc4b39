use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("manifest {path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("manifest row {row}: duplicate subject_id `{id}`")]
    DuplicateSubject { row: usize, id: String },

    #[error("row {row}: unknown {field} token `{token}`")]
    UnknownToken { row: usize, field: &'static str, token: String },

    #[error("row {row}: empty {field}")]
    EmptyField { row: usize, field: &'static str },

    #[error("{path}: {reason}")]
    BadTimeSeries { path: PathBuf, reason: String },

    #[error("zero-variance signal in column {column}")]
    DegenerateSignal { column: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("global MMS scope requires precomputed training statistics")]
    MissingStats,

    #[error("feature vector is already scaled")]
    AlreadyScaled,

    #[error("non-finite gradient in tensor `{tensor}` (first bad index {index})")]
    NonFiniteGradient { tensor: String, index: usize },

    #[error("degenerate training set: {0}")]
    DegenerateTrainSet(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch (file corrupt or truncated)")]
    Checksum,

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("missing class: {0}")]
    MissingClass(String),

    #[error("metric needs at least one {0} sample")]
    EmptySide(&'static str),

    #[error("split plan: {0}")]
    Plan(String),

    #[error("role mismatch: {0}")]
    RoleMismatch(String),

    #[error("synthetic template is not positive definite")]
    NotPositiveDefinite,

    #[error("subject `{0}` has no features")]
    MissingFeatures(String),

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MissingColumn { .. }
                | Error::DuplicateSubject { .. }
                | Error::UnknownToken { .. }
                | Error::EmptyField { .. }
                | Error::RoleMismatch(_)
                | Error::Plan(_)
                | Error::MissingStats
                | Error::AlreadyScaled
        )
    }
}
