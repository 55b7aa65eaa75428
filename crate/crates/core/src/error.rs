use thiserror::Error;

/// Errors raised by operators, estimators, tests and particle flows.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite {what} at point {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },

    #[error("point {point:?} is off the unit sphere (|‖x‖ - 1| = {deviation:.3e})")]
    OffSphere { point: Vec<f64>, deviation: f64 },

    #[error("quadrature domain misses an estimated {mass:.3e} of probability mass")]
    DomainCoverage { mass: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rejection sampler exceeded {0} proposals")]
    SamplerStuck(usize),

    #[error("mean direction undefined (weighted resultant norm {0:.3e})")]
    DirectionUndefined(f64),

    #[error("degenerate concentration: the sample has no angular spread")]
    DegenerateConcentration,

    #[error("empty cluster persisted after {0} re-seeds")]
    EmptyCluster(usize),

    #[error("every particle has log-density -inf")]
    DegenerateWeights,

    #[error("{0} is not supported for this model family")]
    Unsupported(&'static str),

    #[error("particle flow diverged at iteration {0}")]
    Diverged(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
