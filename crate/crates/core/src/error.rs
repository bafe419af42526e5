use thiserror::Error;

use crate::sample::Violation;

/// Errors raised by estimation, fitting and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sample shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("sample failed validation: {}", format_violations(.0))]
    ValidationFailed(Vec<Violation>),

    #[error("treatment level {0} is out of range or has no observations")]
    EmptyArm(usize),

    #[error("training objective became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("every cross-validation candidate failed")]
    AllCandidatesFailed,

    #[error("weights for level {0} sum to zero")]
    DegenerateWeights(usize),

    #[error("all weights are zero")]
    AllZeroWeights,

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("sieve density exponent out of safe range ({0:.3e})")]
    QuadratureOverflow(f64),

    #[error("H estimate for level {level} is numerically zero ({value:.3e})")]
    SingularH { level: usize, value: f64 },

    #[error("negative variance {value:.3e} at index {index}")]
    NegativeVariance { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
