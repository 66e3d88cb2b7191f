use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum CknError {
    /// An argument lies outside the region where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive refinement ran out of budget before meeting the tolerance.
    #[error("convergence failure: {message} (best estimate {estimate:e}, error bound {error_bound:e})")]
    Convergence {
        message: String,
        estimate: f64,
        error_bound: f64,
    },

    /// An iterative solver did not converge; carries the best value reached.
    #[error("numeric failure: {message} (best value {best:e})")]
    Numeric { message: String, best: f64 },

    /// The volume profile cannot answer a query without fabricating data.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Malformed input file or specification.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The input is valid but trivial (e.g. identically zero).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CknError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        CknError::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        CknError::Parse {
            line,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CknError>;
