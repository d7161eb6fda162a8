use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient data: need at least {needed} vectors, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("task description is empty")]
    EmptyDescription,

    #[error("embedding service unavailable after {attempts} attempts: {message}")]
    ServiceUnavailable { attempts: u32, message: String },

    #[error("malformed embedding service response: {0}")]
    MalformedResponse(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("binned masses are only defined for Gaussian mixtures")]
    NotBinnable,

    #[error("parameter samples mix Bernoulli and Gaussian-mixture variants")]
    MixedVariants,

    #[error("need at least {needed} parameter samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("missing parameter samples for pair (policy {policy}, task {task})")]
    MissingSamples { policy: usize, task: usize },

    #[error("campaign needs at least one policy")]
    EmptyPolicySet,

    #[error("campaign needs at least one task")]
    EmptyTaskSet,

    #[error("warm-start outcomes have not been recorded yet")]
    NotWarmStarted,

    #[error("expected {expected} outcomes, got {got}")]
    WrongOutcomeCount { expected: usize, got: usize },

    #[error("outcome {value} at position {index} is outside the {kind} domain")]
    OutOfDomainOutcome {
        index: usize,
        value: f64,
        kind: &'static str,
    },

    #[error("stale suggestion: token {token} does not match campaign version {current}")]
    StaleSuggestion { token: String, current: u64 },

    #[error("reference data missing for pair (policy {policy}, task {task})")]
    MissingReference { policy: usize, task: usize },

    #[error("unknown {kind} '{id}'")]
    UnknownId { kind: &'static str, id: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid distribution parameters: {0}")]
    InvalidParams(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
