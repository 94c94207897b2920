//! Fixed-point maps that move a support state along the homotopy path.
//!
//! * `H` holds lambda fixed and restores penalized stationarity.
//! * `F` frees lambda and finds the level at which the spectrum touches it
//!   at a probe angle while every atom stays a touching maximum.
//! * `G` is `F` with the support angles frozen (grid baseline).

use num_complex::Complex64;

use super::solve::{newton_solve, NewtonOptions, NewtonOutcome, SystemSpec};
use super::system::SystemKind;
use super::SupportState;
use crate::array_model::SteeringModel;
use crate::error::{DoaError, Result};

/// Equilevel attractor: stationarity of the penalized cost at `lambda_target`.
pub fn attractor_h(
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    lambda_target: f64,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let mut start = state.clone();
    start.lambda = lambda_target;
    newton_solve(SystemSpec::full(SystemKind::Lea), model, x, &start, None, opts)
}

/// [`attractor_h`] with the support angles frozen.
pub fn attractor_h_frozen(
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    lambda_target: f64,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let mut start = state.clone();
    start.lambda = lambda_target;
    newton_solve(SystemSpec::frozen(SystemKind::Lea), model, x, &start, None, opts)
}

fn touching(
    spec: SystemSpec,
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    probe: f64,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let out = newton_solve(spec, model, x, state, Some(probe), opts)?;
    let lam = out.state.lambda;
    if !(lam >= 0.0) {
        return Err(DoaError::NonConvergence {
            iterations: out.iterations,
            residual: lam,
        });
    }
    if lam > state.lambda * (1.0 + 1e-12) {
        return Err(DoaError::RisingLambda {
            from: state.lambda,
            to: lam,
        });
    }
    Ok(out)
}

/// Marginalized attractor with free support angles. The returned state's
/// `lambda` is the candidate singular level for `probe`.
pub fn attractor_f(
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    probe: f64,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    touching(SystemSpec::full(SystemKind::Lma), model, x, state, probe, opts)
}

/// Marginalized attractor with frozen support angles.
pub fn attractor_g(
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    probe: f64,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    touching(SystemSpec::frozen(SystemKind::Lma), model, x, state, probe, opts)
}
