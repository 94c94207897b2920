use std::time::Instant;

use num_complex::Complex64;

use super::{check_inputs, EstimateReport, EstimatorOptions, Method, Status};
use crate::array_model::{inner, SteeringModel, Snapshot};
use crate::error::{DoaError, Result};
use crate::newton::SupportState;
use crate::spectrum::global_peak;

fn cost(model: &SteeringModel, x: &[Complex64], doas: &[f64], amps: &[Complex64]) -> f64 {
    let mut r = x.to_vec();
    subtract(model, &mut r, doas, amps, None);
    r.iter().map(|z| z.norm_sqr()).sum()
}

fn subtract(
    model: &SteeringModel,
    r: &mut [Complex64],
    doas: &[f64],
    amps: &[Complex64],
    skip: Option<usize>,
) {
    for (j, (&phi, &s)) in doas.iter().zip(amps).enumerate() {
        if Some(j) == skip {
            continue;
        }
        for (rk, ak) in r.iter_mut().zip(model.steering(phi)) {
            *rk -= ak * s;
        }
    }
}

/// Single-source NLLS fit against a residual: the spectral peak and its
/// least-squares amplitude.
fn fit_one(
    model: &SteeringModel,
    r: &[Complex64],
    others: &[f64],
    opts: &EstimatorOptions,
) -> Result<(f64, Complex64)> {
    let guard = opts.guard_for(model.sensors());
    let pk = global_peak(model, r, others, guard, &opts.search)?;
    let s = inner(&model.steering(pk.phi), r) / model.sensors() as f64;
    Ok((pk.phi, s))
}

/// RELAX with singleton updates: sequential initialization followed by
/// cyclic single-source refits until the cost stops decreasing.
pub fn relax(model: &SteeringModel, x: &Snapshot, opts: &EstimatorOptions) -> Result<EstimateReport> {
    check_inputs(model, x, opts)?;
    let start = Instant::now();
    let deadline = opts.deadline(start);
    let n = opts.n;
    let xs = &x.x;
    let mut doas: Vec<f64> = Vec::with_capacity(n);
    let mut amps: Vec<Complex64> = Vec::with_capacity(n);
    let mut r = xs.clone();
    for _ in 0..n {
        let (phi, s) = fit_one(model, &r, &doas, opts)?;
        for (rk, ak) in r.iter_mut().zip(model.steering(phi)) {
            *rk -= ak * s;
        }
        doas.push(phi);
        amps.push(s);
    }
    let energy: f64 = xs.iter().map(|z| z.norm_sqr()).sum();
    let mut history = vec![cost(model, xs, &doas, &amps)];
    let mut cycles = 0;
    loop {
        if deadline.is_some_and(|d| Instant::now() > d) {
            return Err(DoaError::TimeBudget);
        }
        if cycles >= opts.relax_max_cycles {
            return Err(DoaError::MaxCyclesExceeded(opts.relax_max_cycles));
        }
        cycles += 1;
        for i in 0..n {
            let mut ri = xs.clone();
            subtract(model, &mut ri, &doas, &amps, Some(i));
            let others: Vec<f64> = doas
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d)
                .collect();
            let (phi, s) = fit_one(model, &ri, &others, opts)?;
            // Keep the previous atom if the refit is not an improvement, so
            // the cost sequence never increases.
            let mut trial_d = doas.clone();
            let mut trial_a = amps.clone();
            trial_d[i] = phi;
            trial_a[i] = s;
            if cost(model, xs, &trial_d, &trial_a) <= cost(model, xs, &doas, &amps) {
                doas = trial_d;
                amps = trial_a;
            }
        }
        let c = cost(model, xs, &doas, &amps);
        let prev = *history.last().expect("non-empty");
        history.push(c);
        if prev - c < opts.relax_tol * energy {
            break;
        }
    }

    let state = SupportState::from_amplitudes(doas, &amps, 0.0)?;
    let mut report = EstimateReport::empty(Method::Relax);
    report.fill_state(&state);
    report.iterations = cycles;
    report.cost_history = history;
    report.status = Status::Converged;
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{synthesize, Scenario};
    use crate::estimators::ml_estimate;

    #[test]
    fn single_source_matches_ml() {
        let sc = Scenario {
            m: 12,
            doas: vec![0.33],
            amplitudes: vec![Complex64::new(1.0, 0.2)],
            noise_std: 0.2,
            seed: 4,
        };
        let model = sc.model().unwrap();
        let x = synthesize(&sc).unwrap();
        let opts = EstimatorOptions::with_order(1);
        let a = relax(&model, &x, &opts).unwrap();
        let b = ml_estimate(&model, &x, &opts).unwrap();
        assert!((a.doas[0] - b.doas[0]).abs() < 1e-9);
        assert!((a.amplitudes[0] - b.amplitudes[0]).norm() < 1e-9);
    }

    #[test]
    fn cost_is_non_increasing() {
        let sc = Scenario {
            m: 15,
            doas: vec![-0.5, 0.0, 0.6],
            amplitudes: vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.3),
            ],
            noise_std: 0.05,
            seed: 8,
        };
        let model = sc.model().unwrap();
        let x = synthesize(&sc).unwrap();
        let rep = relax(&model, &x, &EstimatorOptions::with_order(3)).unwrap();
        for w in rep.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
