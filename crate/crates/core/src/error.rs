use thiserror::Error;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Malformed input, shape mismatch, bad configuration.
    Input,
    /// A mathematically undefined operation (log of a non-positive eigenvalue, divergent integral).
    Domain,
    /// A computation refused because it would exceed its enumeration budget.
    Budget,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: max asymmetry {asymmetry:e} exceeds tolerance {tolerance:e}")]
    Asymmetric { asymmetry: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("eigensolver failed to converge after {iterations} iterations (off-diagonal residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("operator norm index {0} has no exact routine; use operator_norm_bound")]
    UnsupportedNorm(f64),

    #[error("{context}: eigenvalue {eigenvalue:e} is outside the domain")]
    Domain { context: String, eigenvalue: f64 },

    #[error("matrix is not positive semi-definite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("Gaussian integral diverges: {0}")]
    DivergentIntegral(String),

    #[error("{failures} of {replicates} replicates failed, first failure: {first}")]
    CellFailed {
        failures: usize,
        replicates: usize,
        first: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} would need {count} evaluations, budget is {budget}")]
    BudgetExceeded {
        what: String,
        count: String,
        budget: u64,
    },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Domain { .. }
            | Error::NotPositiveSemidefinite { .. }
            | Error::DivergentIntegral(_)
            | Error::NoConvergence { .. }
            | Error::CellFailed { .. } => ErrorCategory::Domain,
            Error::BudgetExceeded { .. } => ErrorCategory::Budget,
            _ => ErrorCategory::Input,
        }
    }

    pub(crate) fn domain(context: impl Into<String>, eigenvalue: f64) -> Self {
        Error::Domain {
            context: context.into(),
            eigenvalue,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
