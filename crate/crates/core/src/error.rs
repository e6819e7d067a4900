use thiserror::Error;

/// Errors raised by the solver library.
///
/// Numerical overflow inside a simulated path is not an error at this level:
/// it is reported through [`crate::solver::PathStatus`] so that partial
/// trajectories and ensemble counts survive.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SddeError {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Step size, horizon, grid or mode do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// φ(Δ) fell below μ(1), so μ⁻¹(φ(Δ)) is undefined.
    #[error("truncation policy inconsistent: phi({step}) = {phi} < mu(1) = {mu_one}")]
    PolicyInconsistency { step: f64, phi: f64, mu_one: f64 },

    /// Stability constants violate a margin required for a positive rate root.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    /// A fit window contains unusable data.
    #[error("window error: {0}")]
    Window(String),

    /// The state became non-finite after step `step`.
    #[error("numerical overflow at step {step}")]
    Overflow { step: usize },

    /// A reference path blew up, so no error estimate is possible.
    #[error("reference solution overflowed at step {step} on path {path_id}")]
    ReferenceOverflow { step: usize, path_id: u64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SddeError {
    fn from(err: std::io::Error) -> Self {
        SddeError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SddeError>;
