use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("epidemic threshold undefined: mean degree is zero")]
    UndefinedThreshold,

    #[error("fixed-point iteration did not converge after {iterations} iterations (last theta = {last_theta})")]
    NonConvergence { iterations: usize, last_theta: f64 },

    #[error("integration step {step} too large: density for degree {degree} left [0,1] ({value})")]
    StepSize {
        step: f64,
        degree: usize,
        value: f64,
    },

    #[error("infeasible: violated constraints [{}]", .0.join(", "))]
    Infeasible(Vec<String>),

    #[error("spreading rate is zero but constraint {0} requires a positive threshold")]
    InfeasibleByThreat(String),

    #[error("mission file field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
