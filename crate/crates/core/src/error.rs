use thiserror::Error;

/// Errors raised across the learning pipeline.
#[derive(Debug, Error)]
pub enum GemError {
    #[error("unknown object id {0}")]
    UnknownObject(usize),
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
    #[error("relation graph must contain at least one edge")]
    EmptyGraph,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("planning failed: {0}")]
    PlanningFailed(String),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GemError>;
