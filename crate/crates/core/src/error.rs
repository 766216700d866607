use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cutoff {cutoff} too small: {reason}; need at least {required}")]
    CutoffTooSmall { cutoff: usize, required: usize, reason: String },

    #[error("odd cat state with zero amplitude is the zero vector")]
    DegenerateCat,

    #[error("degenerate hypergeometric parameter: (-2c)_k has a vanishing factor at k = {k}")]
    DegenerateParameter { k: usize },

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error(
        "integration stalled at t = {t:.6e} with step {step:.3e}; \
         reduce the cutoff or loosen the tolerances"
    )]
    Stiffness { t: f64, step: f64 },

    #[error("cumulative hermiticity/trace repairs reached {total:.3e} (limit {limit:.1e})")]
    Drift { total: f64, limit: f64 },

    #[error("jump probability per step {probability:.3} exceeds 0.1; use dt <= {suggested_dt:.3e}")]
    StepTooLarge { probability: f64, suggested_dt: f64 },

    #[error("state parity {0:.3e} is too close to zero to pick a cat parity")]
    AmbiguousParity(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
