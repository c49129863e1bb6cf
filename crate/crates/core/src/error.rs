use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A derivative or state became non-finite during integration.
    #[error("integration failure at t = {t}: non-finite value")]
    IntegrationFailure { t: f64 },

    /// An input violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad scenario/system configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A linear solve or decomposition failed unexpectedly.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The duration line search exhausted its budget without descent.
    #[error("no descending duration found at tau = {tau} after {tried} candidates")]
    NoDescent { tau: f64, tried: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
