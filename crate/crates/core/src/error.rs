use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("record {id}: {reason}")]
    Record { id: String, reason: String },

    #[error("{}: line {line}: {reason}", path.display())]
    CorpusLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("feature file for record {id} ({}): {reason}", path.display())]
    Feature {
        id: String,
        path: PathBuf,
        reason: String,
    },

    #[error("bad file format in {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown gloss token {token:?}")]
    UnknownToken { token: String },

    #[error("empty gloss after normalization")]
    EmptyGloss,

    #[error("could not parse LLM response: expected {expected} bracketed groups, found {found} in {raw:?}")]
    ResponseParse {
        expected: usize,
        found: usize,
        raw: String,
    },

    #[error("transport: {0}")]
    Transport(String),

    #[error("infeasible CTC target: length {target_len} with {repeats} adjacent repeats needs {needed} frames, got {frames}")]
    Infeasible {
        target_len: usize,
        repeats: usize,
        needed: usize,
        frames: usize,
    },

    #[error("non-finite loss at epoch {epoch} on record {id}")]
    NonFiniteLoss { epoch: usize, id: String },

    #[error("empty reference sequence")]
    EmptyReference,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
