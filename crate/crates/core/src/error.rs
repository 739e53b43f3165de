use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("record {index} has a non-finite value at attribute {attribute}")]
    NonFinite { index: u64, attribute: usize },

    #[error("records must have at least one attribute")]
    ZeroDimension,

    #[error("relation is empty")]
    EmptyRelation,

    #[error("sample size {m} exceeds relation size {n}")]
    SampleTooLarge { m: u64, n: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad magic: not a relation file")]
    BadMagic,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("corrupt relation: {0}")]
    Corrupt(String),

    #[error("csv row {row}: {message}")]
    Csv { row: u64, message: String },

    #[error("attribute {0} has zero variance")]
    ZeroVariance(usize),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors that indicate malformed input data rather than an
    /// I/O fault or a bad argument.
    pub fn is_data_integrity(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::BadMagic
                | Error::UnsupportedVersion(_)
                | Error::Corrupt(_)
                | Error::Csv { .. }
                | Error::DimensionMismatch { .. }
                | Error::ZeroVariance(_)
                | Error::EmptyRelation
        )
    }
}
