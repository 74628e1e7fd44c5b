use std::path::PathBuf;

use thiserror::Error;

use crate::llm::LlmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("duplicate candidate name {0:?}")]
    DuplicateName(String),

    #[error("no embedding for candidate {0:?}")]
    MissingEmbedding(String),

    #[error("ragged embedding rows: {name:?} has {got} components, expected {expected}")]
    RaggedEmbedding {
        name: String,
        got: usize,
        expected: usize,
    },

    #[error("embedding dimension {got} does not match expected {expected}")]
    DimMismatch { expected: usize, got: usize },

    #[error("non-finite value for {0:?}")]
    NonFinite(String),

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("unknown candidate {0:?}")]
    UnknownCandidate(String),

    #[error("ground-truth hit {0:?} is not in the pool")]
    GroundTruthNotInPool(String),

    #[error("percentile {percentile} of {pool_size} candidates leaves no hits; use an explicit ground-truth set")]
    PercentileTooCoarse { percentile: f64, pool_size: usize },

    #[error("invalid percentile {0}; must lie in (0, 100)")]
    InvalidPercentile(f64),

    #[error("zero vector is undefined under the cosine metric")]
    ZeroVector,

    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("at least one center is required")]
    NoCenters,

    #[error("batch size must be positive")]
    ZeroBatch,

    #[error("kernel matrix is not positive definite after jitter escalation")]
    NotPositiveDefinite,

    #[error("invalid prompt: {0}")]
    Prompt(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("results from different configurations cannot be aggregated: {0}")]
    MixedConfigs(String),

    #[error(transparent)]
    Llm(#[from] LlmError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
