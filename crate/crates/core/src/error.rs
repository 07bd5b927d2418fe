use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("model `{model}`: parameter `{name}` {reason}")]
    InvalidParam {
        model: String,
        name: String,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operation requires a one-dimensional state, got dimension {0}")]
    NotScalar(usize),

    #[error("non-finite state at step {step}, particle {particle}")]
    NonFiniteState { step: usize, particle: usize },

    #[error("non-finite value in {context} at {point}")]
    NonFinite { context: String, point: String },

    #[error("coefficient pair `{pair}` is not smooth: missing {missing}")]
    NotSmooth { pair: String, missing: &'static str },

    #[error("ensemble mismatch: {0}")]
    EnsembleMismatch(String),

    #[error("measures have unequal particle counts ({0} vs {1}); resample to a common size")]
    UnequalSize(usize, usize),

    #[error("payoff `{0}` is not admissible: weighted integral diverges")]
    Inadmissible(String),

    #[error("payoff `{0}` has no derivative")]
    MissingDerivative(String),

    #[error("weight schedule `{name}` integrates to {integral} on the grid, expected 1")]
    BadSchedule { name: String, integral: f64 },

    #[error("diffusion coefficient is not positive at y = {0}")]
    NonPositiveSigma(f64),

    #[error("cannot invert the transform at {0}: no bracket inside the domain")]
    Bracket(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
