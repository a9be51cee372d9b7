use thiserror::Error;

use crate::matcore::SymMatrix;

pub type Result<T> = std::result::Result<T, Error>;

/// Positioned failure while reading an instance document.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Dimension,
    Ordering,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPd { min_eigenvalue: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("ordering violation: {0}")]
    OrderingViolation(String),

    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    DidNotConverge {
        iterations: usize,
        residual: f64,
        last_iterate: Box<SymMatrix>,
    },

    #[error("KKT violation: {0}")]
    KktViolation(String),

    #[error("theory violation: {0}")]
    TheoryViolation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl Error {
    /// Short machine-readable tag, used by the CLI and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::Dimension(_) => "dimension",
            Error::NotPsd { .. } => "not_psd",
            Error::NotPd { .. } => "not_pd",
            Error::Singular(_) => "singular",
            Error::OrderingViolation(_) => "ordering_violation",
            Error::InvalidInstance(_) => "invalid_instance",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DidNotConverge { .. } => "did_not_converge",
            Error::KktViolation(_) => "kkt_violation",
            Error::TheoryViolation(_) => "theory_violation",
            Error::Unsupported(_) => "unsupported",
            Error::Internal(_) => "internal",
            Error::Parse(_) => "parse",
        }
    }
}
