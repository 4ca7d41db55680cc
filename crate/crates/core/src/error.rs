use thiserror::Error;

use crate::boxsolve::BoxSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Theory is only defined above the recovery threshold delta = 1/2.
    #[error("unsupported regime: delta = {delta} but the box relaxation requires delta > 1/2 (recovery threshold)")]
    UnsupportedRegime { delta: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("solver did not converge after {iterations} iterations (kkt residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Box<BoxSolution>,
    },

    #[error("{failed} of {trials} trials failed, above the 10% limit")]
    AggregateFailure { failed: usize, trials: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_argument_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::UnsupportedRegime { .. }
        )
    }
}
