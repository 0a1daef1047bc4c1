use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {detail}")]
    Format {
        path: PathBuf,
        what: &'static str,
        detail: String,
    },

    /// `row` is the 1-based line number for CSV input and the sample index for
    /// in-memory or raw input.
    #[error("non-finite sample at {location} {row}")]
    NonFinite { location: &'static str, row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("filter design: {0}")]
    FilterDesign(String),

    #[error("signal too short: need more than {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    RateMismatch { left: f64, right: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("signal has zero power")]
    ZeroPower,

    #[error("template subtraction needs at least 3 beats, found {found}")]
    InsufficientBeats { found: usize },

    #[error("corpus: {0}")]
    Corpus(String),

    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: String, detail: String },

    #[error("activation cache is stale (model updated since forward pass)")]
    StaleCache,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, what: &'static str, detail: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            what,
            detail: detail.to_string(),
        }
    }
}
