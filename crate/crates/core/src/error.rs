use std::path::PathBuf;

/// Errors raised by problem evaluation, file loading, diagnostics and the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("point is infeasible (constraint violation {violation:.3e})")]
    Infeasible { violation: f64 },

    #[error("MPCC-SSOC enumeration needs 2^{count} branches, limit is 2^{limit}")]
    BranchLimit { count: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
