use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PinchError {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("blow-up reached: denominator {denominator} is not positive at t = {t}")]
    BlowUpReached { t: f64, denominator: f64 },

    #[error("time {t} outside covered interval [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("step limit of {max_steps} reached at t = {t}")]
    StepLimit { t: f64, max_steps: usize },

    #[error("sampling exhausted after {attempts} attempts ({placed} of {requested} states placed)")]
    SamplingExhausted {
        attempts: usize,
        placed: usize,
        requested: usize,
    },

    #[error("no grid point falls inside the region of {0}")]
    EmptyRegion(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("{context}: {message}")]
    Io { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, PinchError>;

impl PinchError {
    pub(crate) fn io(context: impl Into<String>, err: impl std::fmt::Display) -> Self {
        PinchError::Io {
            context: context.into(),
            message: err.to_string(),
        }
    }
}
