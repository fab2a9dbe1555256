use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("time {t} outside schedule range [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("component variance is zero at t = {t}; use sigma0 > 0 or t > 0")]
    DegenerateVariance { t: f64 },
    #[error("state contains non-finite values")]
    NonFiniteState,
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("class {index} out of range for {count} classes")]
    ClassOutOfRange { index: usize, count: usize },
    #[error("class subset is empty")]
    EmptySubset,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("{count} classes exceeds the cap of {cap}")]
    TooManyClasses { count: usize, cap: usize },
    #[error("alpha_t = 0, the denoiser cannot be inverted")]
    ZeroAlpha,
    #[error("reverse integration produced a non-finite state at step {step}")]
    Diverged { step: usize },
    #[error("grid too short: need at least {needed} points, got {got}")]
    GridTooShort { needed: usize, got: usize },
    #[error("profile never crosses {level} nats")]
    NotBracketed { level: f64 },
    #[error("profile time grids do not match")]
    GridMismatch,
    #[error("transition variance is zero but the residual is not")]
    ZeroTransitionVariance,
    #[error("non-finite posterior increment")]
    NonFiniteIncrement,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
