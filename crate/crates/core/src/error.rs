use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV container: {0}")]
    MalformedContainer(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("WAV file has no audio frames")]
    EmptyAudio,
    #[error("clip {clip_id} has {len} samples, a segment needs {needed}")]
    ClipTooShort {
        clip_id: String,
        len: usize,
        needed: usize,
    },
    #[error("mel filter {index} is degenerate (fft size too small for the number of filters)")]
    DegenerateFilter { index: usize },
    #[error("bin count mismatch: expected {expected}, found {found}")]
    BinMismatch { expected: usize, found: usize },
    #[error("no parsable clips found under {0}")]
    EmptyDataset(PathBuf),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("malformed ratings row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("chance agreement is 1, kappa is undefined")]
    DegenerateAgreement,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input {frames}x{bins} is too small for the model")]
    ShapeTooSmall { frames: usize, bins: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a bug or an
    /// environment failure. Used by the CLI to pick an exit code.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Invariant(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
