use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteinError {
    /// A law, table or model failed validation at construction.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("families cannot be placed on a common finite support: {0}")]
    MixedMode(String),

    #[error("x = {x} is outside the domain of {family}")]
    Domain { family: String, x: f64 },

    #[error("test function violates the boundary convention f({at}) = 0 (got {value})")]
    Boundary { at: f64, value: f64 },

    #[error("y = {0} is outside the essential range of the model")]
    EssentialRange(f64),

    #[error("{count} samples have y outside the essential range (first indices: {first:?})")]
    SamplesOutsideRange { count: usize, first: Vec<usize> },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("stable form exceeds the representable range at x = {0}")]
    OverflowGuard(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("joint y-marginal differs from the model's y-weights at y = {y} ({joint} vs {model})")]
    MarginalMismatch { y: f64, joint: f64, model: f64 },

    #[error("combined support of {0} points exceeds the oracle cap of {1}")]
    Size(usize, usize),

    #[error("perturbation not applicable: {0}")]
    Family(String),

    #[error("linear program failed: {0}")]
    Solver(String),

    /// Solver failure for one section of a bivariate source.
    #[error("at y = {y}: {source}")]
    AtSection {
        y: f64,
        #[source]
        source: Box<SteinError>,
    },
}

pub type Result<T, E = SteinError> = std::result::Result<T, E>;

pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> SteinError {
    SteinError::Invalid {
        what,
        reason: reason.into(),
    }
}
