use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inconsistent configuration: mismatched grids, off-grid shifts, invalid model parts.
    #[error("configuration error: {0}")]
    Config(String),
    /// A query outside the data that is still trustworthy.
    #[error("domain error: {0}")]
    Domain(String),
    /// Non-finite samples.
    #[error("data error: {0}")]
    Data(String),
    /// Invalid scalar argument.
    #[error("argument error: {0}")]
    Argument(String),
    /// Gram matrix too close to singular.
    #[error("degenerate family: {0}")]
    Degeneracy(String),
    /// Estimator requested for a payoff that does not satisfy its smoothness needs.
    #[error("ineligible payoff: {0}")]
    Eligibility(String),
    /// Randomization grid does not cover the sampled values.
    #[error("coverage error: {0}")]
    Coverage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
