//! Error type shared by every module.

use crate::quad::ShellRecord;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported dimension {0} (expected 1..=3)")]
    Dimension(usize),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("dyadic partial sums did not settle after {} shells", trace.len())]
    Divergent { trace: Vec<ShellRecord> },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("linear program infeasible: {0}")]
    Infeasible(String),
    #[error("linear program unbounded: {0}")]
    Unbounded(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
