//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or index shapes are inconsistent.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A parameter is outside its mathematical domain (e.g. a variance <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates a precondition before any numerics run.
    #[error("config error: {0}")]
    Config(String),

    /// A named analytic constraint does not hold for the supplied inputs.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// A factorization failed even after jitter escalation.
    #[error("numerical failure in {context} (diagonal condition estimate {condition:.3e})")]
    Numerical { context: String, condition: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
