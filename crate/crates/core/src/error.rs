use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A mode became NaN or infinite.
    #[error("integrator blowup at step {step} (t = {time})")]
    Blowup { step: usize, time: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    /// Monte Carlo estimate did not reach the requested accuracy.
    #[error("estimation-quality error: {0}")]
    Estimation(String),

    #[error("trace divergent: {0}")]
    TraceDivergent(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
