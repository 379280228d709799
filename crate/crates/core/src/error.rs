use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmetError {
    #[error("invalid Fock space: {0}")]
    InvalidSpace(String),

    #[error("index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A state has weight within the top two levels of the truncation, where
    /// the canonical commutator no longer holds.
    #[error("state support reaches truncation edge (level {level} of {dim})")]
    TruncationEdge { level: usize, dim: usize },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("division by (near) zero: {0}")]
    DivideByZero(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("grid does not cover the mode: {0}")]
    Coverage(String),

    #[error("no information: {0}")]
    ZeroInformation(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, QmetError>;
