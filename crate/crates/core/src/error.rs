use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula or operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A construction or solver was asked to run from parameters it cannot accept.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The engine detected a state that the grid construction should have ruled out.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("run exceeded the budget of {budget} elementary moves; {trace}")]
    Runaway { budget: u64, trace: String },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("probabilities at time {timestamp} sum to {sum}, outside the tolerated band")]
    Normalization { timestamp: String, sum: f64 },

    #[error("{0}: no data rows")]
    NoData(String),

    #[error("{}: file not found", .0.display())]
    NotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Precondition(_)
                | Error::Parse { .. }
                | Error::Normalization { .. }
                | Error::NoData(_)
                | Error::NotFound(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
