use thiserror::Error;

use crate::newton::SupportState;

/// Errors raised by the solvers, estimators and harness.
#[derive(Debug, Clone, Error)]
pub enum DoaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no admissible spectral peak outside the guard zones")]
    NoPeak,
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("Jacobian is ill-conditioned (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },
    /// A converged state has an amplitude modulus below zero. The state is
    /// carried so that path followers can locate the death event.
    #[error("amplitude of atom {index} became negative")]
    NegativeAmplitude {
        index: usize,
        state: Box<SupportState>,
    },
    #[error("probe cannot be the next birth: lambda would rise from {from:e} to {to:e}")]
    RisingLambda { from: f64, to: f64 },
    #[error("path died: support emptied")]
    PathDeath,
    #[error("lambda stalled for {0} consecutive iterations")]
    StallDetected(usize),
    #[error("evaluation budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("maximum number of cycles ({0}) exceeded")]
    MaxCyclesExceeded(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("time budget exhausted")]
    TimeBudget,
}

pub type Result<T> = std::result::Result<T, DoaError>;
