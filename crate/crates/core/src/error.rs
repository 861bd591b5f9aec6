use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("coefficient bound violated: {0}")]
    CoefficientBound(String),

    #[error("non-finite value at B-path {b_path}, W-path {w_path}, node {node}")]
    NonFinite { b_path: usize, w_path: usize, node: usize },

    #[error("non-finite terminal value on W-path {w_path}")]
    NonFiniteTerminal { w_path: usize },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("resource error: {0}")]
    Resource(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
