use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    Index { index: usize, num_qubits: usize },

    #[error("arity mismatch: {0}")]
    Arity(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("{name} = {value} outside its domain {domain}")]
    Domain { name: &'static str, value: f64, domain: &'static str },

    #[error("state is not normalized (norm² = {norm_sqr})")]
    Normalization { norm_sqr: f64 },

    /// `component` is the shifted coordinate, or `None` for the base point.
    #[error("non-finite value {value} at {}", match component {
        Some(j) => format!("shifted component {j}"),
        None => "the base point".to_string(),
    })]
    Numeric { component: Option<usize>, value: f64 },

    #[error("no label assigned to outcome {0}")]
    UnmappedOutcome(String),

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGate(_) => "invalid_gate",
            Error::Index { .. } => "index",
            Error::Arity(_) => "arity",
            Error::Shape { .. } => "shape",
            Error::Domain { .. } => "domain",
            Error::Normalization { .. } => "normalization",
            Error::Numeric { .. } => "numeric",
            Error::UnmappedOutcome(_) => "unmapped_outcome",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }
}
