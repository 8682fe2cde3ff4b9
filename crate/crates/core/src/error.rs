use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the fitting and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row-count mismatch: {left} has {left_rows} rows, {right} has {right_rows}")]
    RowCountMismatch {
        left: String,
        left_rows: usize,
        right: String,
        right_rows: usize,
    },

    #[error("label column `{0}` not found in either input file")]
    MissingLabelColumn(String),

    #[error("label column `{0}` present in both input files; it must appear in exactly one")]
    AmbiguousLabelColumn(String),

    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumericCell {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: row {row}: missing cell in column `{column}`")]
    MissingCell {
        path: PathBuf,
        row: usize,
        column: String,
    },

    #[error("non-finite feature value in {modality} at row {row}, column {col}")]
    NonFinite {
        modality: &'static str,
        row: usize,
        col: usize,
    },

    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),

    #[error("need at least 2 samples, found {0}")]
    TooFewSamples(usize),

    #[error("{path}: no feature columns")]
    NoFeatures { path: PathBuf },

    #[error("dataset not class-ordered: label {label} at position {position} follows {previous}")]
    NotClassOrdered {
        position: usize,
        previous: usize,
        label: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "{block} is not positive definite after ridge {ridge:e} (smallest eigenvalue {min_eigenvalue:e}); increase the ridge"
    )]
    NotPositiveDefinite {
        block: &'static str,
        ridge: f64,
        min_eigenvalue: f64,
    },

    #[error("requested {requested} projection pairs but at most {available} are available")]
    TooManyPairs { requested: usize, available: usize },

    #[error("eigensolver failed to converge: {0}")]
    NoConvergence(&'static str),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical core, as opposed to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::NoConvergence(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
