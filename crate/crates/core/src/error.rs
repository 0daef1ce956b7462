//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate passage id {0:?}")]
    DuplicatePassageId(String),

    #[error("invalid passage: {0}")]
    InvalidPassage(String),

    #[error("duplicate query id {0:?}")]
    DuplicateQueryId(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("duplicate judgment for ({query_id:?}, {passage_id:?})")]
    DuplicateJudgment {
        query_id: String,
        passage_id: String,
    },

    #[error("invalid ranked list for query {query_id:?}: {msg}")]
    InvalidRankedList { query_id: String, msg: String },

    #[error("unknown passage id {0:?}")]
    UnknownPassage(String),

    #[error("unknown query id {0:?}")]
    UnknownQuery(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),

    #[error("empty passage window")]
    EmptyWindow,

    #[error("window size {0} exceeds the supported maximum of {1}")]
    WindowTooLarge(usize, usize),

    #[error("prompt budget of {max_units} units unsatisfiable even at per-passage cap {cap}")]
    BudgetUnsatisfiable { max_units: usize, cap: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("completion contains no usable identifiers for window size {n}: {completion:?}")]
    UnusableCompletion { n: usize, completion: String },

    #[error("backend {name:?} failed: {msg}")]
    Backend { name: String, msg: String },

    #[error("invalid backend spec {0:?}: {1}")]
    InvalidBackendSpec(String, String),

    #[error("invalid window config: {0}")]
    InvalidWindowConfig(String),

    #[error("conflicting judgments: {0}")]
    QrelsConflict(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("forge error: {0}")]
    Forge(String),

    #[error("{0}")]
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

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
