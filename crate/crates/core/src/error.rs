use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus: cannot build a vocabulary from zero tokens")]
    EmptyCorpus,

    #[error("text has no content tokens after tokenization")]
    EmptyContent,

    #[error("max_len must be at least 3, got {0}")]
    MaxLenTooSmall(usize),

    #[error("{path}:{row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("expected {expected} sentence(s) per example, got {got}")]
    SentenceCount { expected: usize, got: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("mixing ratio {0} outside [0, 1]")]
    RatioOutOfRange(f64),

    #[error("span length {len} exceeds content length {content}")]
    SpanTooLong { len: usize, content: usize },

    #[error("content tokens are not contiguous")]
    NonContiguousContent,

    #[error("no content positions shared between the two sequences")]
    NoSharedPositions,

    #[error("sequence lengths differ after padding: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("saliency map has {got} scores for a sequence of length {expected}")]
    SaliencyLength { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Broad failure classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::MaxLenTooSmall(_) => ErrorKind::Usage,
            Error::NonFinite(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn row(path: &std::path::Path, row: usize, message: impl Into<String>) -> Self {
        Error::Row {
            path: path.to_path_buf(),
            row,
            message: message.into(),
        }
    }
}
