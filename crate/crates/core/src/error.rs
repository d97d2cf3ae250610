use thiserror::Error;

/// Errors raised by the re-ranking engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("feature set is empty (n = {n}, d = {d})")]
    EmptyFeatures { n: usize, d: usize },

    #[error("feature row {row} has length {got}, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("non-finite value in feature row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),

    #[error("id table has {ids} entries but the matrix has {rows} rows")]
    IdCountMismatch { ids: usize, rows: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("neighbor count k = {k} exceeds instance count n = {n}")]
    NeighborCountTooLarge { k: usize, n: usize },

    #[error("node {node} has zero affinity row sum")]
    IsolatedNode { node: usize },

    #[error("instance {instance} has zero similarity mass over its local region")]
    EmptyRegion { instance: usize },

    #[error("exact transport oracle limited to {limit} support nodes, got {got}")]
    SupportTooLarge { got: usize, limit: usize },

    #[error("distribution is invalid: {0}")]
    InvalidDistribution(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
