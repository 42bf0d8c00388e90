use thiserror::Error;

/// Errors raised by the mechanism, accountants and aggregation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("Poisson rate {0} exceeds the supported maximum of 1e13")]
    RateTooLarge(f64),

    #[error("integer overflow while {0}")]
    Overflow(&'static str),

    #[error("Bessel evaluation range exceeded: {0}")]
    BesselRange(String),

    #[error("order grids of composed RDP curves differ")]
    MismatchedOrders,

    #[error("no finite epsilon: infinite mass {infinite_mass:e} >= delta {delta:e}")]
    NoFiniteEpsilon { infinite_mass: f64, delta: f64 },

    #[error("target unreachable within the search range: {0}")]
    Unachievable(String),

    #[error("FFT length {len} exceeds the configured cap {cap}")]
    TransformTooLarge { len: usize, cap: usize },

    #[error("conditional rounding failed after {0} attempts")]
    RoundingExhausted(usize),

    #[error("scale equation has no positive root: {0}")]
    InfeasibleScale(String),

    #[error("field vectors differ in {0}")]
    FieldMismatch(&'static str),

    #[error("value {value} outside the field of bit width {bit_width}")]
    OutOfField { value: u64, bit_width: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
