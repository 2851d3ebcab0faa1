use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascError {
    #[error("node index {index} out of range for graph with {n_nodes} nodes")]
    IndexOutOfRange { index: usize, n_nodes: usize },

    #[error("edge ({i}, {j}) has negative weight {weight}")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("node {node} has zero regularized degree (tau = 0 with an isolated node)")]
    ZeroRegularizedDegree { node: usize },

    #[error("operator {0} requires node covariates")]
    MissingCovariates(&'static str),

    #[error("invalid operator specification: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix of size {n} exceeds the dense limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("covariate matrix is identically zero")]
    ZeroCovariates,

    #[error("degenerate value: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, CascError>;
