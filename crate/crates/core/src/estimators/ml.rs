use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{check_inputs, uniform_grid, EstimateReport, EstimatorOptions, Method, Status};
use crate::array_model::{SteeringModel, Snapshot};
use crate::error::{DoaError, Result};
use crate::newton::{damped_newton, SupportState, SystemKind};

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Least-squares amplitudes and residual energy for fixed angles.
pub(crate) fn ls_fit(steer: &[&[Complex64]], x: &[Complex64]) -> Option<(Vec<Complex64>, f64)> {
    let m = x.len();
    let n = steer.len();
    let a = DMatrix::from_fn(m, n, |i, j| steer[j][i]);
    let xv = DVector::from_column_slice(x);
    let gram = a.adjoint() * &a;
    let rhs = a.adjoint() * &xv;
    let s = gram.lu().solve(&rhs)?;
    let res = xv - a * &s;
    let cost = res.iter().map(|z| z.norm_sqr()).sum();
    Some((s.iter().copied().collect(), cost))
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Deterministic ML: exhaustive search over unordered tuples of a
/// `4m`-point grid with closed-form amplitudes, then Newton refinement of
/// the least-squares stationarity system.
pub fn ml_estimate(model: &SteeringModel, x: &Snapshot, opts: &EstimatorOptions) -> Result<EstimateReport> {
    check_inputs(model, x, opts)?;
    let start = Instant::now();
    let n = opts.n;
    if n > 3 {
        return Err(DoaError::InvalidInput(format!(
            "exhaustive ML initialization supports n <= 3, got {n}"
        )));
    }
    let points = opts.ml_grid_factor.max(1) * model.sensors();
    let needed = binomial(points as u64, n as u64);
    if needed > opts.ml_budget {
        return Err(DoaError::BudgetExceeded {
            needed,
            budget: opts.ml_budget,
        });
    }
    let grid = uniform_grid(points);
    let steering: Vec<Vec<Complex64>> = grid.iter().map(|&g| model.steering(g)).collect();

    let mut idx: Vec<usize> = (0..n).collect();
    let mut best: Option<(Vec<usize>, Vec<Complex64>, f64)> = None;
    loop {
        let cols: Vec<&[Complex64]> = idx.iter().map(|&i| steering[i].as_slice()).collect();
        if let Some((s, cost)) = ls_fit(&cols, &x.x) {
            if best.as_ref().is_none_or(|b| cost < b.2) {
                best = Some((idx.clone(), s, cost));
            }
        }
        if !next_combination(&mut idx, points) {
            break;
        }
    }
    let (idx, s, _) = best.ok_or(DoaError::NonConvergence {
        iterations: 0,
        residual: f64::NAN,
    })?;
    let init = SupportState::from_amplitudes(idx.iter().map(|&i| grid[i]).collect(), &s, 0.0)?;
    let out = damped_newton(SystemKind::Ml, model, &x.x, &init, None, &opts.newton)?;

    let mut report = EstimateReport::empty(Method::Ml);
    report.fill_state(&out.state);
    report.iterations = out.iterations;
    report.status = Status::Converged;
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
