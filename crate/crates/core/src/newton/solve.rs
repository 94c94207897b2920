use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::system::{apply_step, assemble, assemble_frozen, NewtonSystem, SystemKind};
use super::SupportState;
use crate::array_model::{norm, SteeringModel};
use crate::error::{DoaError, Result};

/// Newton iteration controls. `tol` is relative to `||x||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub backtrack_ratio: f64,
    pub min_step: f64,
    pub cond_limit: f64,
    /// Converged amplitudes below `-amplitude_floor * ||x||` count as a sign
    /// change of the atom.
    pub amplitude_floor: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            backtrack_ratio: 0.5,
            min_step: 1e-12,
            cond_limit: 1e12,
            amplitude_floor: 1e-6,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol > 0.0
            && self.max_iter > 0
            && self.backtrack_ratio > 0.0
            && self.backtrack_ratio < 1.0
            && self.min_step > 0.0
            && self.cond_limit > 0.0
            && self.amplitude_floor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(DoaError::InvalidInput(format!("invalid Newton options {self:?}")))
        }
    }
}

/// Direction convention of the update `z <- z + sign * J^{-1} eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepSign {
    Plus,
    Minus,
}

impl StepSign {
    fn factor(self) -> f64 {
        match self {
            StepSign::Plus => 1.0,
            StepSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub state: SupportState,
    pub iterations: usize,
    pub residual: f64,
    pub sign: Option<StepSign>,
}

/// Which variant of a system to iterate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub frozen: bool,
}

impl SystemSpec {
    pub fn full(kind: SystemKind) -> Self {
        Self { kind, frozen: false }
    }

    pub fn frozen(kind: SystemKind) -> Self {
        Self { kind, frozen: true }
    }

    pub fn assemble(
        &self,
        model: &SteeringModel,
        x: &[Complex64],
        state: &SupportState,
        probe: Option<f64>,
    ) -> Result<NewtonSystem> {
        if self.frozen {
            assemble_frozen(self.kind, model, x, state, probe)
        } else {
            assemble(self.kind, model, x, state, probe)
        }
    }
}

/// Power of two close to `1 / v`, taken from the exponent bits of `v` so
/// the scaling is exact and commutes with power-of-two data scaling.
fn pow2_inverse(v: f64) -> Option<f64> {
    if !(v.is_finite() && v > 0.0) {
        return None;
    }
    let e = ((v.to_bits() >> 52) & 0x7ff) as i64;
    if e == 0 {
        return None;
    }
    let inv = 2046 - e;
    if !(1..=2046).contains(&inv) {
        return None;
    }
    Some(f64::from_bits((inv as u64) << 52))
}

/// Solves `J y = eta` after exact power-of-two row and column
/// equilibration, refusing systems whose equilibrated condition number
/// exceeds `cond_limit`.
pub fn solve_equilibrated(
    jac: &DMatrix<f64>,
    eta: &DVector<f64>,
    cond_limit: f64,
) -> Result<DVector<f64>> {
    let n = jac.nrows();
    let mut row_scale = vec![0.0; n];
    for (i, rs) in row_scale.iter_mut().enumerate() {
        let mx = jac.row(i).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        *rs = pow2_inverse(mx).ok_or(DoaError::IllConditioned { cond: f64::INFINITY })?;
    }
    let mut scaled = jac.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= row_scale[i];
        }
    }
    let mut col_scale = vec![0.0; n];
    for j in 0..n {
        let mx = scaled.column(j).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        col_scale[j] = pow2_inverse(mx).ok_or(DoaError::IllConditioned { cond: f64::INFINITY })?;
        for i in 0..n {
            scaled[(i, j)] *= col_scale[j];
        }
    }
    let sv = scaled.clone().singular_values();
    let smax = sv.iter().fold(0.0f64, |a, &v| a.max(v));
    let smin = sv.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let cond = smax / smin;
    if !(cond.is_finite() && cond <= cond_limit) {
        return Err(DoaError::IllConditioned { cond });
    }
    let rhs = DVector::from_iterator(n, (0..n).map(|i| eta[i] * row_scale[i]));
    let y = scaled
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(DoaError::IllConditioned { cond: f64::INFINITY })?;
    Ok(DVector::from_iterator(n, (0..n).map(|j| y[j] * col_scale[j])))
}

/// Solves the Newton system in data-free units: residual rows are divided
/// by `||x||` (the touching row by `||x||^2`) and the amplitude and level
/// unknowns by `||x||`, all through one exact power of two. Pivoting then
/// sees the same matrix for any power-of-two rescaling of the data.
fn solve_dimensionless(
    spec: SystemSpec,
    sys: &NewtonSystem,
    xnorm: f64,
    k: usize,
    cond_limit: f64,
) -> Result<DVector<f64>> {
    let Some(unit) = pow2_inverse(xnorm) else {
        return solve_equilibrated(&sys.jacobian, &sys.eta, cond_limit);
    };
    let n = sys.dim();
    let lma = spec.kind == SystemKind::Lma;
    let row = |i: usize| if lma && i == n - 1 { unit * unit } else { unit };
    let amp_cols = if spec.frozen { 0..k } else { k..2 * k };
    let col = |j: usize| {
        if amp_cols.contains(&j) || (lma && j == n - 1) {
            1.0 / unit
        } else {
            1.0
        }
    };
    let jac = DMatrix::from_fn(n, n, |i, j| sys.jacobian[(i, j)] * row(i) * col(j));
    let eta = DVector::from_iterator(n, (0..n).map(|i| sys.eta[i] * row(i)));
    let y = solve_equilibrated(&jac, &eta, cond_limit)?;
    Ok(DVector::from_iterator(n, (0..n).map(|j| y[j] * col(j))))
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn l2_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Residual used for acceptance tests. The touching row is quadratic in the
/// data, so it is divided by `||x||` to keep every entry homogeneous of
/// degree one.
fn merit(spec: SystemSpec, eta: &DVector<f64>, xnorm: f64) -> DVector<f64> {
    let mut m = eta.clone();
    if spec.kind == SystemKind::Lma && xnorm > 0.0 {
        let last = m.len() - 1;
        m[last] /= xnorm;
    }
    m
}

/// Resolves the update sign at the first iteration: the `+` convention is
/// kept only if a short step along it lowers the residual norm.
#[allow(clippy::too_many_arguments)]
fn probe_sign(
    spec: SystemSpec,
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    probe: Option<f64>,
    delta: &DVector<f64>,
    base: f64,
    xnorm: f64,
) -> StepSign {
    let t = 1e-3;
    let plus = apply_step(state, delta, t, spec.kind, spec.frozen);
    match spec.assemble(model, x, &plus, probe) {
        Ok(sys) if l2_norm(&merit(spec, &sys.eta, xnorm)) < base => StepSign::Plus,
        _ => StepSign::Minus,
    }
}

/// Damped Newton iteration on one of the stationarity systems, with simple
/// backtracking on `||eta||_inf`.
pub fn newton_solve(
    spec: SystemSpec,
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    probe: Option<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    opts.validate()?;
    let xnorm = norm(x);
    let tol = opts.tol * xnorm;
    let mut current = state.clone();
    let mut sys = spec.assemble(model, x, &current, probe)?;
    let mut res = inf_norm(&merit(spec, &sys.eta, xnorm));
    let mut sign: Option<StepSign> = None;
    let mut iterations = 0;
    while !(res <= tol) {
        if iterations >= opts.max_iter || !res.is_finite() {
            return Err(DoaError::NonConvergence {
                iterations,
                residual: res,
            });
        }
        let delta = solve_dimensionless(spec, &sys, xnorm, current.len(), opts.cond_limit)?;
        let dir_sign = *sign.get_or_insert_with(|| {
            let base = l2_norm(&merit(spec, &sys.eta, xnorm));
            probe_sign(spec, model, x, &current, probe, &delta, base, xnorm)
        });
        let mut t = 1.0;
        loop {
            let trial = apply_step(&current, &delta, dir_sign.factor() * t, spec.kind, spec.frozen);
            if let Ok(tsys) = spec.assemble(model, x, &trial, probe) {
                let tres = inf_norm(&merit(spec, &tsys.eta, xnorm));
                if tres < res {
                    current = trial;
                    sys = tsys;
                    res = tres;
                    break;
                }
            }
            t *= opts.backtrack_ratio;
            if t < opts.min_step {
                return Err(DoaError::NonConvergence {
                    iterations,
                    residual: res,
                });
            }
        }
        iterations += 1;
    }
    let floor = -opts.amplitude_floor * xnorm;
    if let Some(index) = current.r.iter().position(|&r| r < floor) {
        return Err(DoaError::NegativeAmplitude {
            index,
            state: Box::new(current),
        });
    }
    Ok(NewtonOutcome {
        state: current,
        iterations,
        residual: res,
        sign,
    })
}

/// Damped Newton on the full (non-frozen) system of `kind`.
pub fn damped_newton(
    kind: SystemKind,
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    probe: Option<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    newton_solve(SystemSpec::full(kind), model, x, state, probe, opts)
}
