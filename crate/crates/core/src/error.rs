use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Variants are grouped by the stage that
/// produces them so the command-line front end can map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid language code {0:?}: expected three lowercase ASCII letters")]
    InvalidLanguage(String),
    #[error("duplicate language {0}")]
    DuplicateLanguage(String),
    #[error("dimension mismatch for {lang}: expected {expected}, found {found}")]
    DimensionMismatch { lang: String, expected: usize, found: usize },
    #[error("invalid cell {cell:?} for {lang} in {class} table")]
    InvalidCell { lang: String, class: String, cell: String },
    #[error("table needs at least {min} languages, found {found}")]
    TooFewLanguages { min: usize, found: usize },
    #[error("feature class mismatch: expected {expected}, found {found}")]
    ClassMismatch { expected: String, found: String },
    #[error("incomparable pair {0}/{1}: no co-observed dimensions")]
    IncomparablePair(String, String),
    #[error("missing value in {0} vector, which must be complete")]
    MissingValue(String),
    #[error("language lists differ between matrices")]
    LanguageMismatch,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("need equal-length inputs of at least 2 values, got {0} and {1}")]
    BadLength(usize, usize),
    #[error("zero variance input")]
    ZeroVariance,
    #[error("source {lang} has only {found} shared targets, need {min}")]
    InsufficientTargets { lang: String, found: usize, min: usize },
    #[error("no defined correlation for any source language")]
    NoDefinedCorrelation,
    #[error("objective undefined for every candidate")]
    DegenerateObjective,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("instance too large for exhaustive search: {0} medoid sets")]
    InstanceTooLarge(u128),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("cluster {cluster} has {size} members, fewer than {needed}")]
    ClusterTooSmall { cluster: usize, size: usize, needed: usize },
    #[error("missing baseline: {0}")]
    MissingBaseline(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

impl Error {
    /// True for errors caused by malformed or inconsistent user input, as
    /// opposed to failures discovered while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::InvalidLanguage(_)
                | Error::DuplicateLanguage(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidCell { .. }
                | Error::TooFewLanguages { .. }
                | Error::ClassMismatch { .. }
                | Error::InvalidWeights(_)
                | Error::InvalidArgument(_)
                | Error::KOutOfRange { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
