use thiserror::Error;

use crate::model::EdgeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("reset of {edge} lands outside the target domain (violation {violation:e})")]
    ResetOutsideDomain { edge: EdgeId, violation: f64 },
    #[error("degenerate guard on {edge}: constraint gradient norm {norm:e} below 1e-12")]
    DegenerateGuard { edge: EdgeId, norm: f64 },
    #[error("control signal: {0}")]
    Control(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
