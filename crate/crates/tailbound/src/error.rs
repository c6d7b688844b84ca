//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A trajectory produced a non-finite or diverging coordinate.
    #[error("non-finite state at step {step}{}", replicate.map(|r| format!(" (replicate {r})")).unwrap_or_default())]
    NonFiniteState { step: usize, replicate: Option<usize> },

    /// A replicate exceeded the divergence guard.
    #[error("trajectory diverged at step {step} in replicate {replicate}")]
    Diverged { step: usize, replicate: usize },

    /// The moment function never crosses 1 on the searched interval.
    #[error("no Cramér index below kappa_max = {kappa_max}")]
    NoCramerIndex { kappa_max: f64 },

    /// `E log M >= 0`: the multiplicative factor is not mean-dominated.
    #[error("not mean-dominated: E log M = {mean_log} >= 0")]
    NotMeanDominated { mean_log: f64 },

    /// `P(M = 1) = 1`.
    #[error("degenerate factor: M = 1 almost surely")]
    DegenerateFactor,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Tail estimation failed (ties, too few points, empty tail, ...).
    #[error("tail estimation: {0}")]
    TailEstimation(String),

    /// A model contract was violated at runtime.
    #[error("model contract violated: {0}")]
    ModelContract(String),

    /// Numerical evaluation produced a non-finite value.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("unknown model id: {0}")]
    UnknownModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
