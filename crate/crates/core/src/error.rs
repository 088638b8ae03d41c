use std::path::PathBuf;

use thiserror::Error;

/// Failure reported by a utility function for a single evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{message}")]
pub struct EvalError {
    pub message: String,
    /// Captured standard error, when the evaluator was an external process.
    pub stderr: Option<String>,
}

impl EvalError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            stderr: None,
        }
    }

    pub fn with_stderr(mut self, stderr: impl Into<String>) -> Self {
        self.stderr = Some(stderr.into());
        self
    }
}

#[derive(Debug, Error)]
pub enum SwarmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value {value} at coordinate {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("velocity normalizer is zero: every r*phi product vanished")]
    ZeroNormalizer,

    #[error("expert list is empty")]
    EmptyExperts,

    #[error("utility evaluation failed for particle {particle}: {source}")]
    Evaluation {
        particle: usize,
        #[source]
        source: EvalError,
    },

    #[error("checkpoint {field} invalid: {reason}")]
    Checkpoint { field: &'static str, reason: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("log is incomplete, missing iterations {missing:?}")]
    IncompleteLog { missing: Vec<usize> },

    #[error("retained weight sum {sum} is not positive; cannot renormalize")]
    DegenerateRenormalization { sum: f64 },

    #[error("composition row is not on the probability simplex")]
    UnprojectedRow,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("log serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl SwarmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SwarmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        SwarmError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short stable identifier used by the command line for machine-parseable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            SwarmError::DimensionMismatch { .. } => "dimension-mismatch",
            SwarmError::InvalidParameter { .. } => "invalid-parameter",
            SwarmError::NonFinite { .. } => "non-finite",
            SwarmError::ZeroNormalizer => "zero-normalizer",
            SwarmError::EmptyExperts => "empty-experts",
            SwarmError::Evaluation { .. } => "evaluation-failure",
            SwarmError::Checkpoint { .. } => "checkpoint",
            SwarmError::Config { .. } => "config",
            SwarmError::Parse(_) => "parse",
            SwarmError::IncompleteLog { .. } => "incomplete-log",
            SwarmError::DegenerateRenormalization { .. } => "degenerate-renormalization",
            SwarmError::UnprojectedRow => "unprojected-row",
            SwarmError::InvalidDistribution(_) => "invalid-distribution",
            SwarmError::Io { .. } => "io",
            SwarmError::Serde(_) => "serde",
        }
    }
}

pub type Result<T, E = SwarmError> = std::result::Result<T, E>;
