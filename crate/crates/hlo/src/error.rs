use thiserror::Error;

/// Errors raised by the solvers and their inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HloError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("step rejected: controller could not meet tolerance at t={t}, r={r}")]
    StepRejected { t: f64, r: f64 },
    #[error("bisection did not converge: {0}")]
    Bisection(String),
    #[error("target unreachable from ({t0}, {r0}) to ({t1}, {r1})")]
    Unreachable { t0: f64, r0: f64, t1: f64, r1: f64 },
    #[error("look-back window exhausted without bracketing a minimum (searched back to {searched})")]
    WindowExhausted { searched: f64 },
    #[error("CFL violation: dt={dt} exceeds stable step {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("initial potential not integrable: {0}")]
    NotIntegrable(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl HloError {
    /// Whether the error stems from user input rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HloError::Domain(_) | HloError::Config(_) | HloError::NotIntegrable(_) | HloError::GridMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, HloError>;
