use crate::demod::Existence;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Averaging did not settle within the horizon cap. `best` holds the last estimate.
    #[error("time average did not converge (horizon {horizon}, error estimate {error_estimate:e})")]
    Averaging {
        best: Vec<f64>,
        horizon: f64,
        error_estimate: f64,
    },

    /// No demodulation signal exists for this dither/basis pair.
    #[error("demodulation signal does not exist: {0}")]
    Singular(Existence),

    #[error("auxiliary signal is unsuitable for this extended dither: cross-variance is singular ({0})")]
    SingularCrossVariance(Existence),

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cost evaluation returned a non-finite value at {at:?}")]
    NonFiniteCost { at: Vec<f64> },

    /// The integrator produced a non-finite state. `state` is the last finite state.
    #[error("integration diverged at t = {t}")]
    Divergence { t: f64, state: Vec<f64> },

    #[error("sensor coincides with the source; bearing undefined")]
    UndefinedBearing,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
