//! Error type shared across the crate.

/// Everything that can go wrong when building grids, kernels, operators or
/// running experiments. Variants carry enough context to be actionable from
/// the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested combination of inputs is not defined.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Two objects were built on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A sampled or computed value is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Dense weight storage would exceed the configured budget.
    #[error(
        "dense weight storage needs {required} bytes but the budget is {budget}; \
         use the on_the_fly strategy instead"
    )]
    MemoryBudget { required: u64, budget: u64 },

    /// Time stepping produced a non-finite state.
    #[error("numerical instability at t = {time}: {message}")]
    Instability { time: f64, message: String },

    /// A configuration document failed to parse or validate.
    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Error {
        Error::Unsupported(msg.into())
    }
}
