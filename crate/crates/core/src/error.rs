use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A config value violates a stated constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument is outside the domain of the operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An API was used against its contract (stale tape, shape mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A gradient entry became NaN or infinite before a parameter update.
    #[error("non-finite gradient at parameter index {index}")]
    NonFiniteGradient { index: usize },

    /// A loss or metric became NaN or infinite during training.
    #[error("non-finite {quantity} at iteration {iteration}")]
    NonFinite { iteration: usize, quantity: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
