//! Gridless search of the correlation spectrum `f(phi) = |a(phi)^H r|`.
//!
//! The spectrum of an `m`-sensor array is a trigonometric polynomial of
//! degree `m - 1`, so a scan of a few points per `2 pi / m` brackets every
//! local maximum. Each bracketed maximum is then polished by a safeguarded
//! Newton iteration on `g(phi) = f(phi)^2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{canonical_angle, circular_distance, inner, modulus, SteeringModel};
use crate::error::{DoaError, Result};

/// A local maximum of the correlation spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakResult {
    pub phi: f64,
    /// `|a(phi)^H r|` at `phi`.
    pub p: f64,
    pub is_local_max: bool,
}

/// Scan density of the spectrum search, in points per sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub scan_factor: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { scan_factor: 16.0 }
    }
}

impl SearchOptions {
    pub fn scan_points(&self, m: usize) -> usize {
        ((self.scan_factor * m as f64).ceil() as usize).max(4)
    }
}

/// Default guard radius around support atoms: 5% of a beamwidth.
pub fn default_guard(m: usize) -> f64 {
    0.05 * 2.0 * PI / m as f64
}

/// `a(phi)^H r`.
pub fn correlation(model: &SteeringModel, residual: &[Complex64], phi: f64) -> Complex64 {
    inner(&model.steering(phi), residual)
}

/// `a^H r`, `d^H r` and `c^H r` at `phi`: the spectrum value and its first
/// two derivatives in complex form.
pub fn correlation_derivs(
    model: &SteeringModel,
    residual: &[Complex64],
    phi: f64,
) -> (Complex64, Complex64, Complex64) {
    let tri = model.steering_all(phi);
    (
        inner(&tri.a, residual),
        inner(&tri.d, residual),
        inner(&tri.c, residual),
    )
}

/// Horner evaluation of `sum_k conj(e^{jk phi}) r_k`, used by the scan.
fn correlation_horner(residual: &[Complex64], phi: f64) -> Complex64 {
    let w = Complex64::new(phi.cos(), -phi.sin());
    let mut z = Complex64::new(0.0, 0.0);
    for rk in residual.iter().rev() {
        z = z * w + rk;
    }
    z
}

fn scan_angle(i: usize, n: usize) -> f64 {
    -PI + 2.0 * PI * i as f64 / n as f64
}

/// Polishes the maximum of `g = |a^H r|^2` bracketed by `[lo, hi]`.
fn refine_bracketed(model: &SteeringModel, residual: &[Complex64], lo: f64, hi: f64) -> f64 {
    let slope = |phi: f64| {
        let (z, dz, ddz) = correlation_derivs(model, residual, phi);
        let g1 = 2.0 * (z.conj() * dz).re;
        let g2 = 2.0 * (dz.norm_sqr() + (z.conj() * ddz).re);
        (g1, g2)
    };
    let (mut lo, mut hi) = (lo, hi);
    let (s_lo, _) = slope(lo);
    let (s_hi, _) = slope(hi);
    if !(s_lo > 0.0 && s_hi < 0.0) {
        return golden_max(model, residual, lo, hi);
    }
    let mut phi = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (g1, g2) = slope(phi);
        if g1 == 0.0 {
            break;
        }
        if g1 > 0.0 {
            lo = phi;
        } else {
            hi = phi;
        }
        let newton = phi - g1 / g2;
        let next = if g2 < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - phi).abs() <= 1e-15 * (1.0 + phi.abs()) || hi - lo <= 1e-15 {
            phi = next;
            break;
        }
        phi = next;
    }
    phi
}

/// Golden-section fallback used when the slope does not bracket a maximum.
fn golden_max(model: &SteeringModel, residual: &[Complex64], lo: f64, hi: f64) -> f64 {
    let f = |phi: f64| correlation(model, residual, phi).norm_sqr();
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a < 1e-14 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Refines a local maximum starting from `phi0`, searching within
/// `phi0 +/- half_width`. Used to track a moving peak between path steps.
pub fn refine_local_max(
    model: &SteeringModel,
    residual: &[Complex64],
    phi0: f64,
    half_width: f64,
) -> PeakResult {
    let (z, dz, _) = correlation_derivs(model, residual, phi0);
    let g1 = 2.0 * (z.conj() * dz).re;
    // Walk uphill until the slope changes sign, then bisect/Newton.
    let step = half_width / 8.0;
    let dir = if g1 >= 0.0 { 1.0 } else { -1.0 };
    let mut a = phi0;
    let mut b = phi0;
    let mut found = false;
    for _ in 0..8 {
        b = a + dir * step;
        let (z, dz, _) = correlation_derivs(model, residual, b);
        let s = 2.0 * (z.conj() * dz).re;
        if s * dir <= 0.0 {
            found = true;
            break;
        }
        a = b;
    }
    let phi = if found {
        let (lo, hi) = if dir > 0.0 { (a, b) } else { (b, a) };
        refine_bracketed(model, residual, lo, hi)
    } else {
        b
    };
    let phi = canonical_angle(phi);
    PeakResult {
        phi,
        p: modulus(correlation(model, residual, phi)),
        is_local_max: found,
    }
}

/// Every local maximum of the spectrum whose circular distance to all
/// `exclusions` exceeds `guard`, sorted by decreasing height.
pub fn local_maxima(
    model: &SteeringModel,
    residual: &[Complex64],
    exclusions: &[f64],
    guard: f64,
    opts: &SearchOptions,
) -> Vec<PeakResult> {
    let n = opts.scan_points(model.sensors());
    let g: Vec<f64> = (0..n)
        .map(|i| correlation_horner(residual, scan_angle(i, n)).norm_sqr())
        .collect();
    let mut peaks: Vec<PeakResult> = Vec::new();
    for i in 0..n {
        let prev = g[(i + n - 1) % n];
        let next = g[(i + 1) % n];
        if !(g[i] >= prev && g[i] > next) {
            continue;
        }
        let lo = scan_angle(i, n) - 2.0 * PI / n as f64;
        let hi = scan_angle(i, n) + 2.0 * PI / n as f64;
        let mut phi = refine_bracketed(model, residual, lo, hi);
        let mut p = modulus(correlation(model, residual, phi));
        let scan_p = g[i].sqrt();
        if !(p >= scan_p) {
            phi = scan_angle(i, n);
            p = modulus(correlation(model, residual, phi));
        }
        let phi = canonical_angle(phi);
        if exclusions
            .iter()
            .any(|&e| circular_distance(phi, e) <= guard)
        {
            continue;
        }
        if peaks
            .iter()
            .any(|q| circular_distance(q.phi, phi) < 1e-9)
        {
            continue;
        }
        peaks.push(PeakResult {
            phi,
            p,
            is_local_max: true,
        });
    }
    peaks.sort_by(|a, b| b.p.total_cmp(&a.p).then(a.phi.total_cmp(&b.phi)));
    peaks
}

/// Highest admissible local maximum of `|a(phi)^H r|` over `[-pi, pi)`.
pub fn global_peak(
    model: &SteeringModel,
    residual: &[Complex64],
    exclusions: &[f64],
    guard: f64,
    opts: &SearchOptions,
) -> Result<PeakResult> {
    if guard < 0.0 {
        return Err(DoaError::InvalidInput("guard must be >= 0".into()));
    }
    if residual.len() != model.sensors() {
        return Err(DoaError::DimensionMismatch(format!(
            "residual has {} entries, array has {} sensors",
            residual.len(),
            model.sensors()
        )));
    }
    local_maxima(model, residual, exclusions, guard, opts)
        .into_iter()
        .next()
        .ok_or(DoaError::NoPeak)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirichlet(m: usize, phi: f64) -> f64 {
        if phi.abs() < 1e-12 {
            return m as f64;
        }
        ((m as f64 * phi / 2.0).sin() / (phi / 2.0).sin()).abs()
    }

    #[test]
    fn correlation_of_matched_and_zero_residual() {
        let model = SteeringModel::new(15).unwrap();
        let a = model.steering(0.4);
        let z = correlation(&model, &a, 0.4);
        assert!((z - Complex64::new(15.0, 0.0)).norm() < 1e-12);
        let zero = vec![Complex64::new(0.0, 0.0); 15];
        for phi in [-3.0, 0.0, 1.0] {
            assert_eq!(correlation(&model, &zero, phi), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn correlation_matches_dirichlet_kernel() {
        let model = SteeringModel::new(15).unwrap();
        let a0 = model.steering(0.0);
        for i in 0..2000 {
            let phi = -PI + 2.0 * PI * (i as f64 + 0.37) / 2000.0;
            let got = modulus(correlation(&model, &a0, phi));
            assert!((got - dirichlet(15, phi)).abs() < 1e-11, "phi={phi}");
        }
    }

    #[test]
    fn horner_matches_direct() {
        let model = SteeringModel::new(9).unwrap();
        let r: Vec<Complex64> = (0..9)
            .map(|k| Complex64::new((k as f64 * 1.3).sin(), (k as f64 * 0.7).cos()))
            .collect();
        for phi in [-2.5, -0.1, 0.0, 1.9] {
            let a = correlation(&model, &r, phi);
            let b = correlation_horner(&r, phi);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_source_peak() {
        let model = SteeringModel::new(15).unwrap();
        let x = model.steering(0.7);
        let pk = global_peak(&model, &x, &[], 0.0, &SearchOptions::default()).unwrap();
        assert!((pk.phi - 0.7).abs() < 1e-8);
        assert!((pk.p - 15.0).abs() < 1e-8);
        assert!(pk.is_local_max);
    }

    #[test]
    fn flat_spectrum_has_no_peak() {
        let model = SteeringModel::new(6).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); 6];
        let res = global_peak(&model, &zero, &[], 0.0, &SearchOptions::default());
        assert!(matches!(res, Err(DoaError::NoPeak)));
    }

    #[test]
    fn negative_guard_rejected() {
        let model = SteeringModel::new(6).unwrap();
        let x = model.steering(0.1);
        assert!(global_peak(&model, &x, &[], -1.0, &SearchOptions::default()).is_err());
    }

    #[test]
    fn refine_tracks_shifted_peak() {
        let model = SteeringModel::new(12).unwrap();
        let x = model.steering(0.52);
        let pk = refine_local_max(&model, &x, 0.5, 0.1);
        assert!(pk.is_local_max);
        assert!((pk.phi - 0.52).abs() < 1e-10);
        let pk = refine_local_max(&model, &x, 0.55, 0.1);
        assert!((pk.phi - 0.52).abs() < 1e-10);
    }
}
