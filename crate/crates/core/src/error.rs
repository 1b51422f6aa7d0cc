use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("drift evaluator `{0}` is not available for this drift")]
    UnsupportedOrder(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A constant left the representable range; `label` names the constant.
    #[error("range error while evaluating {label}: value {value:e}")]
    Range { label: &'static str, value: f64 },

    #[error("quadrature did not converge: estimated error {achieved:e} above tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("time {r} outside [0, {horizon})")]
    TimeOutOfRange { r: f64, horizon: f64 },

    #[error("closed-form mean unavailable: {0}")]
    OracleUnavailable(&'static str),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Values above this magnitude are reported as range errors.
pub const OVERFLOW_GUARD: f64 = 1e300;

pub(crate) fn guard(label: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value.abs() <= OVERFLOW_GUARD {
        Ok(value)
    } else {
        Err(Error::Range { label, value })
    }
}
