use thiserror::Error;

use crate::matrix::Matrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular or nearly singular at pivot {pivot} (|pivot| = {magnitude:e})")]
    Singular { pivot: usize, magnitude: f64 },

    #[error("matrix condition estimate {condition:e} exceeds limit {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("vector has no positive entry and cannot be projected onto the simplex")]
    DegenerateVector,

    #[error("class {class} has {count} member(s); at least {required} required")]
    UnusableClass { class: usize, count: usize, required: usize },

    #[error("class {0} is empty")]
    EmptyClass(usize),

    #[error(
        "recovery did not reach residual target {target:e} after {iterations} iterations \
         (best residual {residual:e}, stalled: {stalled})"
    )]
    NonConvergence {
        residual: f64,
        target: f64,
        iterations: usize,
        stalled: bool,
        best: Box<Matrix<f64>>,
    },

    #[error("training diverged at epoch {epoch}: loss became non-finite")]
    TrainingDivergence { epoch: usize, trace: Vec<f64> },

    #[error("model has not been trained")]
    NotTrained,

    #[error("quadrature did not converge (achieved error estimate {achieved:e})")]
    Quadrature { achieved: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that come from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::IllConditioned { .. }
                | Error::DegenerateVector
                | Error::NonConvergence { .. }
                | Error::TrainingDivergence { .. }
                | Error::Quadrature { .. }
        )
    }
}
