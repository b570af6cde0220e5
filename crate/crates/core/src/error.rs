use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every stage of the pipeline.
///
/// The variants are grouped by the exit code the command-line front end maps
/// them to: configuration problems, data problems, and numeric failures.
#[derive(Debug, Error)]
pub enum KiError {
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("batch has no loss positions")]
    EmptyLossSupport,
    #[error("invalid temperature {0}; must be > 0")]
    InvalidTemperature(f64),
    #[error("temperature mismatch: run uses {run}, cache was built at {cache}")]
    TemperatureMismatch { run: f64, cache: f64 },
    #[error("step {step} is outside the schedule range [0, {total}]")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("distribution q is zero on support token {0}")]
    SupportMismatch(u32),
    #[error("invalid top-K value {0}; must be >= 1")]
    InvalidK(usize),
    #[error("invalid smoothing alpha {0}; must be in [0, 1)")]
    InvalidAlpha(f64),
    #[error("no teacher registered for domain '{0}' and no wildcard entry")]
    NoTeacherForDomain(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("format error: {0}")]
    FormatError(String),
    #[error("corrupt cache: {0}")]
    CorruptCache(String),
    #[error("cache has no entry for sequence {seq_id} position {position}")]
    MissingPosition { seq_id: u64, position: usize },
    #[error("cache does not match the run: {0}")]
    CacheMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("duplicate sequence id {0}")]
    DuplicateSeqId(u64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl KiError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KiError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            KiError::Config(_)
            | KiError::InvalidTemperature(_)
            | KiError::InvalidK(_)
            | KiError::InvalidAlpha(_)
            | KiError::StepOutOfRange { .. } => 1,
            KiError::NumericFailure(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, KiError>;
