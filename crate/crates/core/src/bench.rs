//! Seeded Monte Carlo sweeps of estimator accuracy.
//!
//! Every trial derives its own seed from the master seed, the axis value and
//! the trial index, so results do not depend on how trials are scheduled.
//! Trials whose estimator fails or returns an undefined path are excluded
//! from the MSE and counted in `undefined_rate`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Duration;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{synthesize, wrap_angle, Scenario};
use crate::error::{DoaError, Result};
use crate::estimators::{estimate, EstimateReport, EstimatorOptions, Method, Status};

/// Permutation-matched mean squared angle error with wrapped differences.
pub fn matched_mse(estimated: &[f64], truth: &[f64]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(DoaError::LengthMismatch(estimated.len(), truth.len()));
    }
    let n = truth.len();
    if n == 0 {
        return Ok(0.0);
    }
    if n > 6 {
        return Err(DoaError::InvalidInput(format!(
            "permutation matching supports up to 6 targets, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    loop {
        let err: f64 = perm
            .iter()
            .zip(truth)
            .map(|(&p, &t)| wrap_angle(estimated[p] - t).powi(2))
            .sum::<f64>()
            / n as f64;
        best = best.min(err);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best)
}

/// Lexicographic successor; `false` once the last permutation is reached.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Estimates matched to truth with the error-minimizing permutation:
/// `out[i]` is the estimate assigned to `truth[i]`.
pub fn matched_assignment(estimated: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    if estimated.len() != truth.len() {
        return Err(DoaError::LengthMismatch(estimated.len(), truth.len()));
    }
    let n = truth.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    loop {
        let err: f64 = perm
            .iter()
            .zip(truth)
            .map(|(&p, &t)| wrap_angle(estimated[p] - t).powi(2))
            .sum();
        if err < best.0 {
            best = (err, perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best.1.iter().map(|&p| estimated[p]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Values are SNR in dB relative to the first source.
    SnrDb,
    /// Values are the electrical-angle offset of the second source from the
    /// first, in radians.
    Separation,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Separation => "separation_rad",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub name: String,
    pub base: Scenario,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub estimators: Vec<Method>,
    pub master_seed: u64,
    /// SNR used for separation sweeps.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub options: EstimatorOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(DoaError::InvalidInput("trials must be >= 1".into()));
        }
        if self.values.is_empty() {
            return Err(DoaError::InvalidInput("sweep values are empty".into()));
        }
        if self.values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(DoaError::InvalidInput("sweep values must be sorted".into()));
        }
        if self.axis == SweepAxis::Separation && self.base.doas.len() < 2 {
            return Err(DoaError::InvalidInput("separation sweep needs two sources".into()));
        }
        self.base.validate()
    }

    /// Scenario of trial `trial` at axis value `value`.
    pub fn scenario(&self, value: f64, trial: usize) -> Scenario {
        let mut sc = self.base.clone();
        let reference = sc.amplitudes.first().copied().unwrap_or(Complex64::new(1.0, 0.0));
        match self.axis {
            SweepAxis::SnrDb => sc.noise_std = Scenario::noise_std_for_snr(reference, value),
            SweepAxis::Separation => {
                sc.doas[1] = sc.doas[0] + value;
                if let Some(snr) = self.snr_db {
                    sc.noise_std = Scenario::noise_std_for_snr(reference, snr);
                }
            }
        }
        sc.seed = self.master_seed ^ trial_hash(value, trial);
        sc
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of `(axis value, trial index)`.
pub fn trial_hash(value: f64, trial: usize) -> u64 {
    mix64(mix64(value.to_bits()) ^ (trial as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub axis_value: f64,
    pub method: Method,
    /// Mean matched squared error over converged trials (rad^2), NaN if none.
    pub mse: f64,
    pub undefined_rate: f64,
    pub mean_wall_time: Duration,
    pub trials_used: usize,
}

/// Outcome of one estimator on one trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub value: f64,
    pub trial: usize,
    pub method: Method,
    pub truth: Vec<f64>,
    pub report: std::result::Result<EstimateReport, DoaError>,
}

impl TrialOutcome {
    pub fn converged(&self) -> Option<&EstimateReport> {
        self.report
            .as_ref()
            .ok()
            .filter(|r| r.status == Status::Converged && r.doas.len() == self.truth.len())
    }
}

/// Runs every (value, trial, method) combination. Outcomes are ordered by
/// value, then trial, then the spec's estimator order.
pub fn run_trials(spec: &SweepSpec) -> Result<Vec<TrialOutcome>> {
    spec.validate()?;
    let jobs: Vec<(f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.trials).map(move |t| (v, t)))
        .collect();
    let nested: Vec<Vec<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(value, trial)| {
            let sc = spec.scenario(value, trial);
            let truth = sc.doas.clone();
            let mut opts = spec.options.clone();
            opts.n = truth.len();
            opts.time_budget.get_or_insert(TRIAL_TIME_BUDGET_S);
            let snap = synthesize(&sc);
            let model = sc.model();
            spec.estimators
                .iter()
                .map(|&method| {
                    let report = match (&snap, &model) {
                        (Ok(x), Ok(model)) => estimate(method, model, x, &opts),
                        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                    };
                    TrialOutcome {
                        value,
                        trial,
                        method,
                        truth: truth.clone(),
                        report,
                    }
                })
                .collect()
        })
        .collect();
    Ok(nested.into_iter().flatten().collect())
}

/// Aggregates trial outcomes into one row per (value, method).
pub fn aggregate(spec: &SweepSpec, outcomes: &[TrialOutcome]) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &value in &spec.values {
        for &method in &spec.estimators {
            let sel: Vec<&TrialOutcome> = outcomes
                .iter()
                .filter(|o| o.value.to_bits() == value.to_bits() && o.method == method)
                .collect();
            let mut sum = 0.0;
            let mut used = 0usize;
            let mut wall = 0.0;
            for o in &sel {
                if let Ok(r) = &o.report {
                    wall += r.wall_time_ms;
                }
                if let Some(r) = o.converged() {
                    if let Ok(e) = matched_mse(&r.doas, &o.truth) {
                        sum += e;
                        used += 1;
                    }
                }
            }
            let total = sel.len().max(1);
            rows.push(BenchRow {
                axis_value: value,
                method,
                mse: if used > 0 { sum / used as f64 } else { f64::NAN },
                undefined_rate: (total - used) as f64 / total as f64,
                mean_wall_time: Duration::from_secs_f64(wall / total as f64 / 1e3),
                trials_used: used,
            });
        }
    }
    rows
}

/// Runs the sweep on the current rayon pool.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<BenchRow>> {
    let outcomes = run_trials(spec)?;
    Ok(aggregate(spec, &outcomes))
}

/// Runs the sweep on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(spec: &SweepSpec, threads: usize) -> Result<Vec<BenchRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| DoaError::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}

/// Default per-trial wall-clock budget in seconds.
pub const TRIAL_TIME_BUDGET_S: f64 = 30.0;

pub const CSV_HEADER: &str = "axis,method,mse,undefined_rate,mean_wall_time_ms,trials_used";

/// Renders rows as CSV. Wall times are machine dependent, so the column is
/// left empty unless `with_timing` is set.
pub fn to_csv(axis: SweepAxis, rows: &[BenchRow], with_timing: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# axis unit: {}", axis.label());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let wall = if with_timing {
            format!("{:.3}", r.mean_wall_time.as_secs_f64() * 1e3)
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{},{},{:e},{},{},{}",
            r.axis_value, r.method, r.mse, r.undefined_rate, wall, r.trials_used
        );
    }
    out
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// Desk-scale versions of the three reference experiments.
pub fn builtin_scenarios() -> Vec<SweepSpec> {
    let m = 15usize;
    let mf = m as f64;
    let fig1 = SweepSpec {
        name: "fig1".into(),
        base: Scenario {
            m,
            doas: vec![-2.0 * PI / mf, 2.0 * PI / mf],
            amplitudes: vec![real(1.0), real(1.0)],
            noise_std: 0.0,
            seed: 0,
        },
        axis: SweepAxis::SnrDb,
        values: (0..=15).map(|i| 2.0 * i as f64).collect(),
        trials: 100,
        estimators: vec![Method::Classo, Method::Ml, Method::Relax],
        master_seed: 1,
        snr_db: None,
        options: EstimatorOptions::default(),
    };
    let fig2 = SweepSpec {
        name: "fig2".into(),
        base: Scenario {
            m,
            doas: vec![0.0, 4.0 * PI / mf],
            amplitudes: vec![real(1.0), real(1.0)],
            noise_std: 0.0,
            seed: 0,
        },
        axis: SweepAxis::Separation,
        values: (1..=16).map(|i| i as f64 * PI / (2.0 * mf)).collect(),
        trials: 100,
        estimators: vec![Method::Classo, Method::Relax],
        master_seed: 2,
        snr_db: Some(10.0),
        options: EstimatorOptions::default(),
    };
    let fig3 = SweepSpec {
        name: "fig3".into(),
        base: Scenario {
            m,
            doas: vec![-5.0 * PI / mf, 0.0, 3.5 * PI / mf],
            amplitudes: vec![real(1.0), real(1.0), Complex64::new(0.0, 0.1)],
            noise_std: 0.0,
            seed: 0,
        },
        axis: SweepAxis::SnrDb,
        values: (0..=8).map(|i| 5.0 * i as f64).collect(),
        trials: 100,
        estimators: vec![Method::ClassoH, Method::Relax],
        master_seed: 3,
        snr_db: None,
        options: EstimatorOptions {
            mu: 0.8,
            ..EstimatorOptions::default()
        },
    };
    vec![fig1, fig2, fig3]
}

pub fn builtin_scenario(name: &str) -> Option<SweepSpec> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}
