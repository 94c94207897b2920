//! Residual/Jacobian assembly for the three stationarity systems.
//!
//! Unknowns are ordered `(theta_1..theta_k, r_1..r_k, alpha_1..alpha_k[, lambda])`
//! and residual rows
//!
//! ```text
//! R1_l = Re(a_l^H n) - lambda Re(u_l)
//! R2_l = Im(a_l^H n) - lambda Im(u_l)
//! R3_l = Re(conj(u_l) d_l^H n)
//! R4   = |a(probe)^H n|^2 - lambda^2          (LMA only)
//! ```
//!
//! with `n = x - A s`, `s_l = r_l u_l` and `u_l = exp(j alpha_l)`. The ML system
//! drops the `lambda` terms. The third row carries the phase of the atom so
//! that it stays informative for a newborn atom with `r_l = 0`. "Frozen"
//! systems drop the `R3` rows and the `theta` columns.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SupportState;
use crate::array_model::{inner, SteeringModel, SteeringTriple};
use crate::error::{DoaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    /// Unpenalized least-squares stationarity.
    Ml,
    /// Fixed-lambda penalized stationarity (equilevel attractor).
    Lea,
    /// LEA plus the touching condition at a probe, with lambda unknown.
    Lma,
}

/// Assembled residual and Jacobian.
#[derive(Debug, Clone)]
pub struct NewtonSystem {
    pub kind: SystemKind,
    pub frozen: bool,
    pub eta: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl NewtonSystem {
    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    pub fn residual_inf(&self) -> f64 {
        self.eta.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

fn neg_j(z: Complex64) -> Complex64 {
    Complex64::new(z.im, -z.re)
}

fn check(kind: SystemKind, model: &SteeringModel, x: &[Complex64], state: &SupportState, probe: Option<f64>) -> Result<()> {
    if x.len() != model.sensors() {
        return Err(DoaError::DimensionMismatch(format!(
            "snapshot has {} samples, array has {} sensors",
            x.len(),
            model.sensors()
        )));
    }
    if state.is_empty() {
        return Err(DoaError::DimensionMismatch("empty support".into()));
    }
    if state.r.len() != state.len() || state.phase.len() != state.len() {
        return Err(DoaError::DimensionMismatch("ragged support state".into()));
    }
    match (kind, probe) {
        (SystemKind::Lma, None) => Err(DoaError::DimensionMismatch(
            "LMA system needs a probe angle".into(),
        )),
        _ => Ok(()),
    }
}

/// Assembles the full system for `kind` at `state`. `probe` is required for
/// [`SystemKind::Lma`] and ignored otherwise.
pub fn assemble(
    kind: SystemKind,
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    probe: Option<f64>,
) -> Result<NewtonSystem> {
    check(kind, model, x, state, probe)?;
    let k = state.len();
    let lma = kind == SystemKind::Lma;
    let penalized = kind != SystemKind::Ml;
    let lambda = if penalized { state.lambda } else { 0.0 };
    let dim = 3 * k + usize::from(lma);

    let tri: Vec<SteeringTriple> = state.support.iter().map(|&p| model.steering_all(p)).collect();
    let s = state.amplitudes();
    let u = &state.phase;
    let mut nhat = x.to_vec();
    for (t, si) in tri.iter().zip(&s) {
        for (nk, ak) in nhat.iter_mut().zip(&t.a) {
            *nk -= ak * si;
        }
    }
    let z: Vec<Complex64> = tri.iter().map(|t| inner(&t.a, &nhat)).collect();
    let w: Vec<Complex64> = tri.iter().map(|t| inner(&t.d, &nhat)).collect();
    let v: Vec<Complex64> = tri.iter().map(|t| inner(&t.c, &nhat)).collect();

    let mut eta = DVector::<f64>::zeros(dim);
    let mut jac = DMatrix::<f64>::zeros(dim, dim);
    let (th, rr, al) = (0, k, 2 * k);

    for l in 0..k {
        eta[l] = z[l].re - lambda * u[l].re;
        eta[k + l] = z[l].im - lambda * u[l].im;
        eta[2 * k + l] = (u[l].conj() * w[l]).re;
        for i in 0..k {
            let g_aa = inner(&tri[l].a, &tri[i].a);
            let g_ad = inner(&tri[l].a, &tri[i].d);
            let g_da = inner(&tri[l].d, &tri[i].a);
            let g_dd = inner(&tri[l].d, &tri[i].d);

            let mut dz_th = -(g_ad * s[i]);
            let dz_r = -(g_aa * u[i]);
            let dz_al = neg_j(g_aa * s[i]);
            let mut dw_th = -(g_dd * s[i]);
            let dw_r = -(g_da * u[i]);
            let dw_al = neg_j(g_da * s[i]);
            if l == i {
                dz_th += w[l];
                dw_th += v[l];
            }
            jac[(l, th + i)] = dz_th.re;
            jac[(k + l, th + i)] = dz_th.im;
            jac[(l, rr + i)] = dz_r.re;
            jac[(k + l, rr + i)] = dz_r.im;
            jac[(l, al + i)] = dz_al.re;
            jac[(k + l, al + i)] = dz_al.im;

            let ub = u[l].conj();
            jac[(2 * k + l, th + i)] = (ub * dw_th).re;
            jac[(2 * k + l, rr + i)] = (ub * dw_r).re;
            jac[(2 * k + l, al + i)] = (ub * dw_al).re;
        }
        // d conj(u_l) / d alpha_l = -j conj(u_l)
        jac[(2 * k + l, al + l)] += (u[l].conj() * w[l]).im;
        if penalized {
            jac[(l, al + l)] += lambda * u[l].im;
            jac[(k + l, al + l)] -= lambda * u[l].re;
        }
        if lma {
            jac[(l, 3 * k)] = -u[l].re;
            jac[(k + l, 3 * k)] = -u[l].im;
        }
    }

    if lma {
        let phi_p = probe.expect("checked above");
        let ap = model.steering(phi_p);
        let zp = inner(&ap, &nhat);
        let row = 3 * k;
        eta[row] = zp.norm_sqr() - lambda * lambda;
        for i in 0..k {
            let h_a = inner(&ap, &tri[i].a);
            let h_d = inner(&ap, &tri[i].d);
            let dzp_th = -(h_d * s[i]);
            let dzp_r = -(h_a * u[i]);
            let dzp_al = neg_j(h_a * s[i]);
            jac[(row, th + i)] = 2.0 * (zp.conj() * dzp_th).re;
            jac[(row, rr + i)] = 2.0 * (zp.conj() * dzp_r).re;
            jac[(row, al + i)] = 2.0 * (zp.conj() * dzp_al).re;
        }
        jac[(row, row)] = -2.0 * lambda;
    }

    Ok(NewtonSystem {
        kind,
        frozen: false,
        eta,
        jacobian: jac,
    })
}

/// Same as [`assemble`] with the support angles held fixed: the `R3` rows
/// and `theta` columns are removed, leaving unknowns `(r, alpha[, lambda])`.
pub fn assemble_frozen(
    kind: SystemKind,
    model: &SteeringModel,
    x: &[Complex64],
    state: &SupportState,
    probe: Option<f64>,
) -> Result<NewtonSystem> {
    let full = assemble(kind, model, x, state, probe)?;
    let k = state.len();
    let keep: Vec<usize> = (0..2 * k)
        .chain((kind == SystemKind::Lma).then_some(3 * k))
        .collect();
    let cols: Vec<usize> = (k..3 * k)
        .chain((kind == SystemKind::Lma).then_some(3 * k))
        .collect();
    let n = keep.len();
    let eta = DVector::from_iterator(n, keep.iter().map(|&i| full.eta[i]));
    let jacobian = DMatrix::from_fn(n, n, |i, j| full.jacobian[(keep[i], cols[j])]);
    Ok(NewtonSystem {
        kind,
        frozen: true,
        eta,
        jacobian,
    })
}

/// Applies `t * delta` to `state` in the unknown ordering of the matching
/// system. Phase increments rotate the phasors.
pub fn apply_step(
    state: &SupportState,
    delta: &DVector<f64>,
    t: f64,
    kind: SystemKind,
    frozen: bool,
) -> SupportState {
    let k = state.len();
    let mut out = state.clone();
    let (r0, a0) = if frozen { (0, k) } else { (k, 2 * k) };
    if !frozen {
        for i in 0..k {
            out.support[i] += t * delta[i];
        }
    }
    for i in 0..k {
        out.r[i] += t * delta[r0 + i];
        let da = t * delta[a0 + i];
        let rot = Complex64::new(da.cos(), da.sin());
        let p = out.phase[i] * rot;
        out.phase[i] = p / p.norm_sqr().sqrt();
    }
    if kind == SystemKind::Lma {
        out.lambda += t * delta[a0 + k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state2() -> SupportState {
        SupportState::new(vec![-0.4, 0.9], vec![0.8, 1.3], &[0.3, -2.0], 2.5).unwrap()
    }

    fn snapshot(model: &SteeringModel) -> Vec<Complex64> {
        (0..model.sensors())
            .map(|k| Complex64::new((k as f64 * 0.77).cos() + 0.3, (k as f64 * 1.91).sin()))
            .collect()
    }

    #[test]
    fn lea_at_zero_lambda_is_ml() {
        let model = SteeringModel::new(8).unwrap();
        let x = snapshot(&model);
        let mut st = state2();
        st.lambda = 0.0;
        let ml = assemble(SystemKind::Ml, &model, &x, &st, None).unwrap();
        let lea = assemble(SystemKind::Lea, &model, &x, &st, None).unwrap();
        assert_eq!(ml.eta, lea.eta);
        assert_eq!(ml.jacobian, lea.jacobian);
    }

    #[test]
    fn dimensions() {
        let model = SteeringModel::new(8).unwrap();
        let x = snapshot(&model);
        let st = state2();
        assert_eq!(assemble(SystemKind::Lea, &model, &x, &st, None).unwrap().dim(), 6);
        assert_eq!(assemble(SystemKind::Lma, &model, &x, &st, Some(2.0)).unwrap().dim(), 7);
        assert_eq!(assemble_frozen(SystemKind::Lma, &model, &x, &st, Some(2.0)).unwrap().dim(), 5);
        assert_eq!(assemble_frozen(SystemKind::Lea, &model, &x, &st, None).unwrap().dim(), 4);
        assert!(matches!(
            assemble(SystemKind::Lma, &model, &x, &st, None),
            Err(DoaError::DimensionMismatch(_))
        ));
        assert!(assemble(SystemKind::Lea, &model, &x[..4], &st, None).is_err());
    }

    #[test]
    fn single_atom_stationary_point() {
        let m = 15;
        let model = SteeringModel::new(m).unwrap();
        let s = Complex64::from_polar(1.2, 0.6);
        let x: Vec<Complex64> = model.steering(0.7).iter().map(|a| a * s).collect();
        let lambda = 3.0;
        let st = SupportState::new(vec![0.7], vec![1.2 - lambda / m as f64], &[0.6], lambda).unwrap();
        let sys = assemble(SystemKind::Lea, &model, &x, &st, None).unwrap();
        assert!(sys.residual_inf() < 1e-12, "{}", sys.eta);
    }

    #[test]
    fn frozen_is_a_submatrix() {
        let model = SteeringModel::new(8).unwrap();
        let x = snapshot(&model);
        let st = state2();
        let full = assemble(SystemKind::Lma, &model, &x, &st, Some(2.0)).unwrap();
        let fz = assemble_frozen(SystemKind::Lma, &model, &x, &st, Some(2.0)).unwrap();
        assert_eq!(fz.jacobian[(0, 0)], full.jacobian[(0, 2)]);
        assert_eq!(fz.jacobian[(4, 4)], full.jacobian[(6, 6)]);
        assert_eq!(fz.eta[4], full.eta[6]);
    }
}
