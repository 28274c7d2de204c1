use thiserror::Error;

/// Errors produced by the traversal engine and its verifiers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("solver stalled after {iterations} iterations")]
    SolverStall { iterations: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical kernel rather than of the inputs.
    pub fn is_solver_error(&self) -> bool {
        matches!(self, Error::SolverStall { .. } | Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
