//! Uniform linear array model in electrical-angle coordinates.
//!
//! Sensor `k` (counted from the phase reference at sensor 0) sees the phase
//! `k * phi`, so the steering vector is `a_k(phi) = exp(j k phi)`. For a
//! half-wavelength array the electrical angle relates to the physical angle
//! by `phi = pi * cos(theta)`; see [`physical_to_electrical`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};

/// Steering geometry of an `m`-sensor half-wavelength ULA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteeringModel {
    m: usize,
}

impl SteeringModel {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(DoaError::InvalidInput(format!(
                "array needs at least 2 sensors, got {m}"
            )));
        }
        Ok(Self { m })
    }

    pub fn sensors(&self) -> usize {
        self.m
    }

    /// `a(phi)`, entry `k` equal to `exp(j k phi)`.
    pub fn steering(&self, phi: f64) -> Vec<Complex64> {
        (0..self.m)
            .map(|k| {
                let t = k as f64 * phi;
                Complex64::new(t.cos(), t.sin())
            })
            .collect()
    }

    /// First and second derivatives of the steering vector with respect to
    /// the electrical angle: `d_k = jk a_k`, `c_k = -k^2 a_k`.
    pub fn steering_derivs(&self, phi: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut d = Vec::with_capacity(self.m);
        let mut c = Vec::with_capacity(self.m);
        for k in 0..self.m {
            let kf = k as f64;
            let t = kf * phi;
            let (sin, cos) = t.sin_cos();
            d.push(Complex64::new(-kf * sin, kf * cos));
            c.push(Complex64::new(-kf * kf * cos, -kf * kf * sin));
        }
        (d, c)
    }

    /// Steering vector together with both derivatives.
    pub fn steering_all(&self, phi: f64) -> SteeringTriple {
        let a = self.steering(phi);
        let (d, c) = self.steering_derivs(phi);
        SteeringTriple { a, d, c }
    }
}

/// `a(phi)`, `d(phi)` and `c(phi)` evaluated at a single angle.
#[derive(Debug, Clone)]
pub struct SteeringTriple {
    pub a: Vec<Complex64>,
    pub d: Vec<Complex64>,
    pub c: Vec<Complex64>,
}

/// Hermitian inner product `u^H v`.
pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter()
        .zip(v)
        .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
}

/// Euclidean norm computed as `sqrt(sum(re^2 + im^2))`.
pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Modulus as `sqrt(re^2 + im^2)`; symmetric in the two parts, unlike `hypot`
/// implementations that reorder their arguments.
#[inline]
pub fn modulus(z: Complex64) -> f64 {
    z.norm_sqr().sqrt()
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x.rem_euclid(two_pi);
    if y > PI {
        y -= two_pi;
    }
    y
}

/// Wraps an electrical angle into the canonical interval `[-pi, pi)`.
pub fn canonical_angle(x: f64) -> f64 {
    let y = wrap_angle(x);
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Circular distance between two electrical angles.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Physical angle in radians (`[0, pi]`) to electrical angle.
pub fn physical_to_electrical(theta: f64) -> f64 {
    PI * theta.cos()
}

/// Electrical angle to physical angle in radians. Values outside `[-pi, pi]`
/// are clamped to the visible region.
pub fn electrical_to_physical(phi: f64) -> f64 {
    (phi / PI).clamp(-1.0, 1.0).acos()
}

/// One array observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub m: usize,
    pub x: Vec<Complex64>,
}

impl Snapshot {
    pub fn new(x: Vec<Complex64>) -> Self {
        Self { m: x.len(), x }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.m {
            return Err(DoaError::DimensionMismatch(format!(
                "snapshot declares m={} but carries {} samples",
                self.m,
                self.x.len()
            )));
        }
        if self.x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DoaError::InvalidInput("snapshot has non-finite samples".into()));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.x)
    }

    /// Returns a copy with every sample multiplied by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            m: self.m,
            x: self.x.iter().map(|z| z * c).collect(),
        }
    }
}

/// Ground truth for one simulated observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub m: usize,
    #[serde(alias = "dogs")]
    pub doas: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    /// Per-component complex noise standard deviation.
    pub noise_std: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        SteeringModel::new(self.m)?;
        if self.doas.len() != self.amplitudes.len() {
            return Err(DoaError::LengthMismatch(self.doas.len(), self.amplitudes.len()));
        }
        if self.doas.len() > self.m {
            return Err(DoaError::InvalidInput(format!(
                "{} sources exceed {} sensors",
                self.doas.len(),
                self.m
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(DoaError::InvalidInput("noise_std must be finite and >= 0".into()));
        }
        if self.doas.iter().any(|d| !d.is_finite()) {
            return Err(DoaError::InvalidInput("non-finite DOA".into()));
        }
        Ok(())
    }

    /// `|s_1|^2 / sigma^2` in dB, infinite for a noiseless scenario.
    pub fn snr_db(&self) -> f64 {
        let p = self.amplitudes.first().map_or(0.0, |s| s.norm_sqr());
        10.0 * (p / (self.noise_std * self.noise_std)).log10()
    }

    /// Noise standard deviation giving the requested SNR relative to the
    /// first source.
    pub fn noise_std_for_snr(reference: Complex64, snr_db: f64) -> f64 {
        (reference.norm_sqr() / 10f64.powf(snr_db / 10.0)).sqrt()
    }

    pub fn model(&self) -> Result<SteeringModel> {
        SteeringModel::new(self.m)
    }
}

/// Draws the snapshot `x = sum_i a(phi_i) s_i + n` for a scenario. Real and
/// imaginary noise parts are independent `N(0, sigma^2 / 2)`; the output is a
/// pure function of the scenario fields.
pub fn synthesize(scenario: &Scenario) -> Result<Snapshot> {
    scenario.validate()?;
    let model = scenario.model()?;
    let mut x = vec![Complex64::new(0.0, 0.0); scenario.m];
    for (&phi, &s) in scenario.doas.iter().zip(&scenario.amplitudes) {
        for (xk, ak) in x.iter_mut().zip(model.steering(phi)) {
            *xk += ak * s;
        }
    }
    if scenario.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let scale = scenario.noise_std / 2f64.sqrt();
        for xk in x.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *xk += Complex64::new(re * scale, im * scale);
        }
    }
    Ok(Snapshot::new(x))
}
