//! Crate-wide error type.

use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("symbol mapping cycle involving {symbol} on {date}")]
    SymbolCycle { symbol: String, date: NaiveDate },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training set contains a single class ({positive} positive of {total})")]
    SingleClass { positive: usize, total: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: expected {expected} columns, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by input data rather than configuration or internals.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Corrupt { .. }
                | Error::Malformed(_)
                | Error::SymbolCycle { .. }
                | Error::MissingData(_)
                | Error::InsufficientHistory(_)
                | Error::Empty(_)
        )
    }
}
