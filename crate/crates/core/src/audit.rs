//! Independent verification of the l1 optimality certificate:
//!
//! 1. `|a(phi)^H n| <= lambda` for every angle (every grid point for grid
//!    estimates), and
//! 2. `a(phi_i)^H n = lambda exp(j alpha_i)` at every atom,
//!
//! with `n = x - A s`. The spectrum bound is checked by a dense scan with
//! golden-section polishing, sharing no code with the estimators' search.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{circular_distance, norm, SteeringModel, Snapshot};
use crate::error::{DoaError, Result};
use crate::estimators::{uniform_grid, EstimateReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Allowed relative excess of the spectrum over lambda.
    pub spectrum_tol: f64,
    /// Allowed support residual relative to `||x||`.
    pub support_tol: f64,
    /// Dense scan density in points per sensor.
    pub scan_factor: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            spectrum_tol: 1e-6,
            support_tol: 1e-8,
            scan_factor: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `max_phi f(phi) / lambda - 1`.
    pub max_spectrum_excess: f64,
    /// Angle of the spectrum maximum.
    pub argmax: f64,
    /// `max_i |a_i^H n - lambda u_i| / ||x||`.
    pub max_support_residual: f64,
    pub passed: bool,
}

fn spectrum_at(m: usize, nhat: &[Complex64], phi: f64) -> f64 {
    let mut z = Complex64::new(0.0, 0.0);
    for (k, nk) in nhat.iter().enumerate().take(m) {
        let t = k as f64 * phi;
        z += Complex64::new(t.cos(), -t.sin()) * nk;
    }
    z.norm()
}

fn golden(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Checks both certificate conditions for an explicit estimate. With
/// `grid = Some((size, guard))` the spectrum bound is checked only on the
/// points of the uniform grid of that size lying farther than `guard` from
/// every atom, the admissible set of the grid homotopy.
#[allow(clippy::too_many_arguments)]
pub fn audit_certificate(
    model: &SteeringModel,
    x: &Snapshot,
    doas: &[f64],
    amplitudes: &[Complex64],
    phases: &[f64],
    lambda: f64,
    grid: Option<(usize, f64)>,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    let m = model.sensors();
    if x.x.len() != m {
        return Err(DoaError::DimensionMismatch(format!(
            "snapshot has {} samples, array has {m} sensors",
            x.x.len()
        )));
    }
    if doas.len() != amplitudes.len() || doas.len() != phases.len() {
        return Err(DoaError::LengthMismatch(doas.len(), amplitudes.len()));
    }
    if !(lambda > 0.0) {
        return Err(DoaError::InvalidInput("certificate needs lambda > 0".into()));
    }
    let mut nhat = x.x.clone();
    for (&phi, s) in doas.iter().zip(amplitudes) {
        for (k, nk) in nhat.iter_mut().enumerate() {
            let t = k as f64 * phi;
            *nk -= Complex64::new(t.cos(), t.sin()) * s;
        }
    }
    let xnorm = norm(&x.x).max(f64::MIN_POSITIVE);

    let mut support_res = 0.0f64;
    for (&phi, &alpha) in doas.iter().zip(phases) {
        let mut z = Complex64::new(0.0, 0.0);
        for (k, nk) in nhat.iter().enumerate() {
            let t = k as f64 * phi;
            z += Complex64::new(t.cos(), -t.sin()) * nk;
        }
        let target = Complex64::from_polar(lambda, alpha);
        support_res = support_res.max((z - target).norm() / xnorm);
    }

    let (argmax, fmax) = match grid {
        Some((size, guard)) => uniform_grid(size)
            .into_iter()
            .filter(|&g| doas.iter().all(|&d| circular_distance(d, g) > guard))
            .map(|g| (g, spectrum_at(m, &nhat, g)))
            .fold((0.0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc }),
        None => {
            let n = opts.scan_factor.max(4) * m;
            let h = 2.0 * PI / n as f64;
            let vals: Vec<f64> = (0..n)
                .map(|i| spectrum_at(m, &nhat, -PI + h * i as f64))
                .collect();
            let mut best = (0.0, f64::NEG_INFINITY);
            for i in 0..n {
                let prev = vals[(i + n - 1) % n];
                let next = vals[(i + 1) % n];
                if vals[i] >= prev && vals[i] >= next {
                    let c = -PI + h * i as f64;
                    let (p, v) = golden(|t| spectrum_at(m, &nhat, t), c - h, c + h);
                    let v = v.max(vals[i]);
                    if v > best.1 {
                        best = (p, v);
                    }
                }
            }
            best
        }
    };
    let excess = fmax / lambda - 1.0;
    Ok(AuditReport {
        max_spectrum_excess: excess,
        argmax,
        max_support_residual: support_res,
        passed: excess <= opts.spectrum_tol && support_res <= opts.support_tol,
    })
}

/// Audits an l1 estimate report against its snapshot. Reports from methods
/// without a lambda certificate are rejected.
pub fn audit_report(
    model: &SteeringModel,
    x: &Snapshot,
    report: &EstimateReport,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    if !report.method.is_lasso_family() {
        return Err(DoaError::InvalidInput(format!(
            "method '{}' has no lambda optimality certificate to audit",
            report.method
        )));
    }
    let lambda = report
        .lambda
        .ok_or_else(|| DoaError::InvalidInput("report carries no lambda".into()))?;
    audit_certificate(
        model,
        x,
        &report.doas,
        &report.amplitudes,
        &report.phases,
        lambda,
        report.grid_size.map(|size| (size, report.guard.unwrap_or(0.0))),
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom_closed_form_passes() {
        let m = 9;
        let model = SteeringModel::new(m).unwrap();
        let x = Snapshot::new(model.steering(0.3));
        let lambda = 4.0;
        let amp = Complex64::new(1.0 - lambda / m as f64, 0.0);
        let rep = audit_certificate(&model, &x, &[0.3], &[amp], &[0.0], lambda, None, &AuditOptions::default())
            .unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_spectrum_excess.abs() < 1e-9);

        let bad = audit_certificate(&model, &x, &[0.31], &[amp], &[0.0], lambda, None, &AuditOptions::default())
            .unwrap();
        assert!(!bad.passed);
    }

    #[test]
    fn zero_lambda_rejected() {
        let model = SteeringModel::new(4).unwrap();
        let x = Snapshot::new(model.steering(0.0));
        assert!(audit_certificate(&model, &x, &[], &[], &[], 0.0, None, &AuditOptions::default()).is_err());
    }
}
