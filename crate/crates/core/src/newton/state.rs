use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{circular_distance, modulus, SteeringModel};
use crate::error::{DoaError, Result};

/// Active set of atoms with polar amplitudes and the current regularization
/// level. Phases are stored as unit phasors `exp(j alpha)` so that rotating
/// the data by a quarter turn maps states to states without rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportState {
    pub support: Vec<f64>,
    pub r: Vec<f64>,
    pub phase: Vec<Complex64>,
    pub lambda: f64,
}

impl SupportState {
    pub fn new(support: Vec<f64>, r: Vec<f64>, alpha: &[f64], lambda: f64) -> Result<Self> {
        let phase = alpha
            .iter()
            .map(|&a| Complex64::new(a.cos(), a.sin()))
            .collect();
        Self::from_phasors(support, r, phase, lambda)
    }

    pub fn from_phasors(
        support: Vec<f64>,
        r: Vec<f64>,
        phase: Vec<Complex64>,
        lambda: f64,
    ) -> Result<Self> {
        if support.len() != r.len() || support.len() != phase.len() {
            return Err(DoaError::DimensionMismatch(format!(
                "support {} / r {} / phase {}",
                support.len(),
                r.len(),
                phase.len()
            )));
        }
        Ok(Self {
            support,
            r,
            phase,
            lambda,
        })
    }

    /// Polar decomposition of complex amplitudes.
    pub fn from_amplitudes(support: Vec<f64>, amplitudes: &[Complex64], lambda: f64) -> Result<Self> {
        let (r, phase) = amplitudes
            .iter()
            .map(|&s| {
                let m = modulus(s);
                if m > 0.0 {
                    (m, s / m)
                } else {
                    (0.0, Complex64::new(1.0, 0.0))
                }
            })
            .unzip();
        Self::from_phasors(support, r, phase, lambda)
    }

    pub fn empty(lambda: f64) -> Self {
        Self {
            support: Vec::new(),
            r: Vec::new(),
            phase: Vec::new(),
            lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.phase.iter().map(|u| u.im.atan2(u.re)).collect()
    }

    /// `s_i = r_i exp(j alpha_i)`.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.r.iter().zip(&self.phase).map(|(&r, &u)| u * r).collect()
    }

    /// `x - A(I) s`.
    pub fn residual(&self, model: &SteeringModel, x: &[Complex64]) -> Vec<Complex64> {
        let mut nhat = x.to_vec();
        for (&phi, s) in self.support.iter().zip(self.amplitudes()) {
            for (nk, ak) in nhat.iter_mut().zip(model.steering(phi)) {
                *nk -= ak * s;
            }
        }
        nhat
    }

    pub fn push_atom(&mut self, phi: f64, r: f64, phase: Complex64) {
        self.support.push(phi);
        self.r.push(r);
        self.phase.push(phase);
    }

    pub fn remove_atom(&mut self, index: usize) {
        self.support.remove(index);
        self.r.remove(index);
        self.phase.remove(index);
    }

    /// Smallest pairwise circular gap between support angles.
    pub fn min_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                gap = gap.min(circular_distance(self.support[i], self.support[j]));
            }
        }
        gap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_round_trip() {
        let amps = [Complex64::new(0.0, 2.0), Complex64::new(-1.0, 0.0)];
        let st = SupportState::from_amplitudes(vec![0.1, 0.9], &amps, 1.0).unwrap();
        let back = st.amplitudes();
        for (a, b) in amps.iter().zip(&back) {
            assert!((a - b).norm() < 1e-15);
        }
        let alpha = st.alpha();
        assert!((alpha[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_ragged_fields() {
        assert!(SupportState::new(vec![0.0, 1.0], vec![1.0], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn residual_of_exact_fit_is_zero() {
        let model = SteeringModel::new(5).unwrap();
        let x = model.steering(0.3);
        let st = SupportState::new(vec![0.3], vec![1.0], &[0.0], 0.0).unwrap();
        assert!(st.residual(&model, &x).iter().all(|z| z.norm() < 1e-15));
        let mut st = st;
        st.push_atom(1.0, 0.0, Complex64::new(1.0, 0.0));
        assert!((st.min_gap() - 0.7).abs() < 1e-15);
        st.remove_atom(0);
        assert_eq!(st.support, vec![1.0]);
    }
}
