use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient evaluation produced a non-finite value at t={t}, x={x:?}")]
    NonFiniteCoefficient { t: f64, x: Vec<f64> },

    #[error("non-finite state on path {path} at t={t}")]
    NonFiniteState { path: usize, t: f64 },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("grid with {fine} steps does not refine grid with {coarse} steps")]
    NotRefining { coarse: usize, fine: usize },

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("exact solver capped at n={cap} (got n={n}); use the entropic estimator")]
    SizeOverCap { n: usize, cap: usize },

    #[error("transport plan violates the marginal constraint (error {0:e})")]
    MarginalViolation(f64),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("specification '{0}' has no affine structure")]
    NotAffine(String),

    #[error("degenerate law: {0}")]
    Degenerate(String),

    #[error("checkpoint t={0} not present in batch")]
    MissingCheckpoint(f64),

    #[error("unknown catalog entry '{0}'")]
    UnknownSde(String),

    #[error("curve value {value} at N={n} is not positive")]
    NonPositiveCurve { n: usize, value: f64 },

    #[error("integrator did not reach tolerance {tol:e} within {steps} steps")]
    NoConvergence { tol: f64, steps: usize },

    #[error("N={n}: {source}")]
    AtN {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_n(self, n: usize) -> Self {
        Error::AtN {
            n,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
