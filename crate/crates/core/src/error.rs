use thiserror::Error;

use crate::exact::TransportSolution;

/// Errors produced by the solvers and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("robustness radius must lie in [0, 1), got {0}")]
    InvalidRadius(f64),

    #[error("measures have different masses: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("expected a probability measure, total mass is {0}")]
    NotProbability(f64),

    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Sinkhorn did not reach marginal tolerance (violation {violation:e} after {iterations} iterations)")]
    NotConverged {
        violation: f64,
        iterations: usize,
        partial: Box<TransportSolution>,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("solution carries no dual potentials")]
    NoPotentials,

    #[error("candidate family is empty")]
    EmptyFamily,

    #[error(
        "radius {0} is at or beyond the breakdown point 1/3; robust distance estimation \
         cannot give meaningful guarantees when eps >= 1/3"
    )]
    BeyondBreakdown(f64),

    #[error("curve has no elbow (all slopes are numerically zero)")]
    NoElbow,

    #[error("moment order q = {q} must exceed p = {p}")]
    InvalidMomentOrder { p: f64, q: f64 },

    #[error("instance too large: {atoms} atoms exceeds cap {cap}")]
    TooLarge { atoms: usize, cap: usize },

    #[error("min-cost flow is infeasible")]
    Infeasible,

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("at tau = {tau}: {source}")]
    AtRadius {
        tau: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_radius(eps: f64) -> Result<()> {
    if eps.is_finite() && (0.0..1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::InvalidRadius(eps))
    }
}
