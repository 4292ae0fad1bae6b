//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by corpus ingestion, model construction, training and
/// inference.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text (corpus, embedding, lexicon or config file).
    #[error("parse error at line {line}: {msg}")]
    Parse {
        /// 1-based line number in the offending stream.
        line: usize,
        /// What went wrong.
        msg: String,
    },

    /// Semantically invalid data (bad spans, cyclic trees, missing resources).
    #[error("{0}")]
    Data(String),

    /// Shape disagreement between model parts or model and inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss during {phase}, epoch {epoch}, {unit}")]
    NonFinite {
        /// Training phase ("pretrain" or "joint").
        phase: &'static str,
        /// 0-based epoch index.
        epoch: usize,
        /// Batch or sentence description.
        unit: String,
    },

    /// Corrupt, truncated or incompatible checkpoint stream.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
