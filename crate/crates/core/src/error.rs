use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("degenerate treatment split: {treated} treated, {control} control")]
    DegenerateSplit { treated: usize, control: usize },

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("insufficient data: need at least {needed} rows, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("percentage error is undefined for a true effect of zero")]
    DivisionByZero,

    #[error("summary is empty after excluding ate_true = {excluded}")]
    EmptySummary { excluded: f64 },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("cell {scenario} (ate_true = {ate_true}, pi = {pi}) aborted: {reason}")]
    CellAborted {
        scenario: String,
        ate_true: f64,
        pi: f64,
        reason: String,
    },

    #[error("report is incomplete ({aborted} aborted cells); partial output must be allowed explicitly")]
    Incomplete { aborted: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
