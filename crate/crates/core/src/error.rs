//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
///
/// `is_input_error` distinguishes bad inputs (files, shapes, flags) from
/// numerical failures (rank deficiency, explosive recursions); the CLI maps
/// the former to exit code 2 and the latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse failure: {0}")]
    Csv(String),

    #[error("non-numeric cell at row {row}, column {col}: {text:?}")]
    NonNumericCell { row: usize, col: usize, text: String },

    #[error("ragged csv row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty csv body")]
    EmptyBody,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("series too short: need at least {needed} observations, have {have}")]
    SeriesTooShort { needed: usize, have: usize },

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("non-finite value generated at time index {time_index}")]
    NonFinite { time_index: usize },

    #[error("degenerate residual scale: {0}")]
    DegenerateScale(String),

    #[error("estimation failure: {0}")]
    Estimation(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::NonNumericCell { .. }
                | Error::RaggedRow { .. }
                | Error::EmptyBody
                | Error::InvalidInput(_)
                | Error::DimensionMismatch(_)
                | Error::SeriesTooShort { .. }
        )
    }
}
