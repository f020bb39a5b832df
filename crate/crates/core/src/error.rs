use std::path::PathBuf;

/// Errors surfaced by the engine and data pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input violated a precondition (shape mismatch, empty batch, bad range, ...).
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A non-finite value reached a numeric kernel.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A corpus file could not be parsed.
    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    /// Weighted averaging was called with unusable contributions.
    #[error("averaging error: {0}")]
    Averaging(String),

    /// Every selected client was skipped, so the round cannot proceed.
    #[error("no participating clients in round {0}")]
    NoParticipants(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
