use std::io;

use thiserror::Error;

/// Errors produced anywhere in the retrieval pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A required CSV column is missing or the column mapping is inconsistent.
    #[error("schema error: {0}")]
    Schema(String),

    /// Input data violates an invariant (non-monotone timestamps, dangling ids, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Caller passed an argument outside the operation's domain.
    #[error("input error: {0}")]
    Input(String),

    /// A configuration value is out of range.
    #[error("config error: {0}")]
    Config(String),

    /// Classical MDS found fewer usable dimensions than requested.
    #[error("dimension error: requested {requested} dimensions but only {usable} positive eigenvalues")]
    Dimension { requested: usize, usable: usize },

    /// A pairwise element of a distance matrix failed.
    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    /// A landmark distance failed while embedding.
    #[error("landmark {landmark}: {source}")]
    Landmark {
        landmark: String,
        #[source]
        source: Box<Error>,
    },

    /// A persisted file could not be decoded.
    #[error("load error: {0}")]
    Load(String),

    /// An LLM response did not follow the plan grammar.
    #[error("parse error: {message}")]
    Parse { message: String, raw: String },

    /// The LLM endpoint could not be reached; the call may be retried.
    #[error("transport error (retriable): {0}")]
    Transport(String),

    /// No expert index exists for the scenario's interaction type.
    #[error("routing error: no expert for interaction type {0:?}")]
    Routing(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
