use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid game: {0}")]
    Validation(String),

    #[error("population {population}: more than {cap} simple routes")]
    RouteCapExceeded { population: String, cap: usize },

    #[error("{what}: {count} vertex profiles exceed the cap of {cap}")]
    VertexCapExceeded { what: &'static str, count: u128, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("inadmissible flow: {0}")]
    Inadmissible(String),

    #[error("noise level must be positive and finite, got {0}")]
    InvalidNoise(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("adaptive step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("eigenvalue solver failed")]
    EigenFailure,

    #[error("singular linear system")]
    Singular,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("contraction inequality violated at t = {t} for pair {pair}: {lhs:e} > {rhs:e}")]
    ContractionViolated { t: f64, pair: usize, lhs: f64, rhs: f64 },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation(_)
                | Error::Dimension { .. }
                | Error::Inadmissible(_)
                | Error::InvalidNoise(_)
                | Error::RouteCapExceeded { .. }
                | Error::VertexCapExceeded { .. }
                | Error::Precondition(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
