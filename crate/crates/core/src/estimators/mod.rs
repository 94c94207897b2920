//! End-to-end DOA estimators.
//!
//! * [`classo`]: continuous l1 path following with marginalized jumps.
//! * [`classo_h`]: the same path followed by small equilevel steps.
//! * [`sps_lasso`]: grid-restricted path following with frozen angles.
//! * [`ml_estimate`]: exhaustive grid initialization plus Newton refinement.
//! * [`relax`]: sequential peak picking with cyclic single-source refits.

mod ml;
mod path;
mod relax;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{SteeringModel, Snapshot};
use crate::error::{DoaError, Result};
use crate::newton::{NewtonOptions, SupportState};
use crate::spectrum::{default_guard, SearchOptions};

pub use ml::ml_estimate;
pub use relax::relax;

use path::{Event, Mode, PathFollower};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Classo,
    ClassoH,
    Sps,
    Ml,
    Relax,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Classo,
        Method::ClassoH,
        Method::Sps,
        Method::Ml,
        Method::Relax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Classo => "classo",
            Method::ClassoH => "classo_h",
            Method::Sps => "sps",
            Method::Ml => "ml",
            Method::Relax => "relax",
        }
    }

    /// Methods that produce a lambda optimality certificate.
    pub fn is_lasso_family(self) -> bool {
        matches!(self, Method::Classo | Method::ClassoH | Method::Sps)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DoaError::InvalidInput(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    /// The path never reached the requested model order.
    Undefined,
    Failed,
}

/// Estimator output. Angles are electrical radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    #[serde(alias = "dogs")]
    pub doas: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    /// Phase of each atom; kept separately so zero-modulus atoms keep theirs.
    pub phases: Vec<f64>,
    /// Level at which the estimate was read (l1 methods only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    /// `(lambda, support size)` after every birth, death and the final read.
    pub lambda_path: Vec<(f64, usize)>,
    pub iterations: usize,
    pub status: Status,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub guard: Option<f64>,
    /// Number of equilevel Newton solves (l1 methods).
    #[serde(default)]
    pub h_steps: usize,
    /// Squared-error cost after initialization and after every cycle (RELAX).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub cost_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

impl EstimateReport {
    fn empty(method: Method) -> Self {
        Self {
            method,
            doas: Vec::new(),
            amplitudes: Vec::new(),
            phases: Vec::new(),
            lambda: None,
            lambda_path: Vec::new(),
            iterations: 0,
            status: Status::Failed,
            wall_time_ms: 0.0,
            mu: None,
            grid_size: None,
            guard: None,
            h_steps: 0,
            cost_history: Vec::new(),
            message: None,
        }
    }

    fn fill_state(&mut self, state: &SupportState) {
        self.doas = state.support.clone();
        self.amplitudes = state.amplitudes();
        self.phases = state.alpha();
    }

    /// Rebuilds the support state recorded in the report.
    pub fn state(&self) -> Result<SupportState> {
        let r = self.amplitudes.iter().map(|s| s.norm()).collect();
        SupportState::new(
            self.doas.clone(),
            r,
            &self.phases,
            self.lambda.unwrap_or(0.0),
        )
    }
}

/// Estimator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    /// Requested model order.
    pub n: usize,
    /// Level-update compromise of the equilevel continuation.
    pub mu: f64,
    /// The estimate is read at this fraction of the n-th birth level.
    pub report_lambda_factor: f64,
    pub newton: NewtonOptions,
    pub grid_size: usize,
    /// Exclusion radius around atoms; `None` means 5% of `2 pi / m`.
    pub guard: Option<f64>,
    pub search: SearchOptions,
    /// A birth is declared when the off-support peak is within this relative
    /// distance of the level.
    pub birth_tol: f64,
    /// Paths that fall below `lambda_floor * lambda_0` are undefined.
    pub lambda_floor: f64,
    /// Per-axis ML initialization grid, in points per sensor.
    pub ml_grid_factor: usize,
    /// Maximum number of ML grid tuples.
    pub ml_budget: u64,
    pub relax_max_cycles: usize,
    pub relax_tol: f64,
    /// Seconds before an estimator call gives up.
    pub time_budget: Option<f64>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            n: 1,
            mu: 0.8,
            report_lambda_factor: 0.5,
            newton: NewtonOptions::default(),
            grid_size: 1024,
            guard: None,
            search: SearchOptions::default(),
            birth_tol: 1e-6,
            lambda_floor: 1e-8,
            ml_grid_factor: 4,
            ml_budget: 5_000_000,
            relax_max_cycles: 200,
            relax_tol: 1e-12,
            time_budget: None,
        }
    }
}

impl EstimatorOptions {
    pub fn with_order(n: usize) -> Self {
        Self {
            n,
            ..Default::default()
        }
    }

    pub fn guard_for(&self, m: usize) -> f64 {
        self.guard.unwrap_or_else(|| default_guard(m))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(DoaError::InvalidInput("model order must be >= 1".into()));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(DoaError::InvalidInput(format!("mu must lie in (0, 1), got {}", self.mu)));
        }
        if !(self.report_lambda_factor > 0.0 && self.report_lambda_factor <= 1.0) {
            return Err(DoaError::InvalidInput(format!(
                "report_lambda_factor must lie in (0, 1], got {}",
                self.report_lambda_factor
            )));
        }
        if !(self.birth_tol > 0.0 && self.lambda_floor > 0.0) {
            return Err(DoaError::InvalidInput("tolerances must be positive".into()));
        }
        if self.guard.is_some_and(|g| !(g >= 0.0)) {
            return Err(DoaError::InvalidInput("guard must be >= 0".into()));
        }
        self.newton.validate()
    }

    fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_budget
            .map(|s| start + Duration::from_secs_f64(s.max(0.0)))
    }
}

fn check_inputs(model: &SteeringModel, x: &Snapshot, opts: &EstimatorOptions) -> Result<()> {
    x.validate()?;
    if x.m != model.sensors() {
        return Err(DoaError::DimensionMismatch(format!(
            "snapshot has m={}, model has m={}",
            x.m,
            model.sensors()
        )));
    }
    opts.validate()?;
    if opts.n >= model.sensors() {
        return Err(DoaError::InvalidInput(format!(
            "model order {} needs more than {} sensors",
            opts.n,
            model.sensors()
        )));
    }
    Ok(())
}

/// Runs `method` on one snapshot.
pub fn estimate(
    method: Method,
    model: &SteeringModel,
    x: &Snapshot,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    match method {
        Method::Classo => classo(model, x, opts),
        Method::ClassoH => classo_h(model, x, opts),
        Method::Sps => sps_lasso(model, x, opts),
        Method::Ml => ml_estimate(model, x, opts),
        Method::Relax => relax(model, x, opts),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stepping {
    Jump,
    Equilevel,
}

fn follow_path(
    method: Method,
    model: &SteeringModel,
    x: &Snapshot,
    opts: &EstimatorOptions,
    grid: Option<Vec<f64>>,
    stepping: Stepping,
) -> Result<EstimateReport> {
    check_inputs(model, x, opts)?;
    let start = Instant::now();
    let mut report = EstimateReport::empty(method);
    report.guard = Some(opts.guard_for(model.sensors()));
    report.grid_size = grid.as_ref().map(Vec::len);
    if method == Method::ClassoH {
        report.mu = Some(opts.mu);
    }
    let finish = |mut report: EstimateReport, pf: Option<&PathFollower>, status: Status| {
        if let Some(pf) = pf {
            report.fill_state(&pf.state);
            report.lambda = Some(pf.state.lambda);
            report.lambda_path = pf.lambda_path.clone();
            report.iterations = pf.steps;
            report.h_steps = pf.h_steps;
        }
        report.status = status;
        report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        report
    };

    let Some(mut pf) = PathFollower::start(model, &x.x, opts, grid, opts.deadline(start))? else {
        report.message = Some("data spectrum is flat".into());
        return Ok(finish(report, None, Status::Undefined));
    };
    let event_budget = 4 * opts.n + 20;
    while pf.births < opts.n {
        if pf.events > event_budget {
            report.message = Some("event budget exhausted before reaching the model order".into());
            return Ok(finish(report, Some(&pf), Status::Undefined));
        }
        if stepping == Stepping::Jump && pf.jump()? {
            continue;
        }
        match pf.advance(Mode::Birth)? {
            Event::BirthDue(pk) => pf.add_atom(&pk),
            Event::Death(index) => pf.remove_atom(index)?,
            Event::Floor | Event::ReachedTarget => {
                report.message = Some("level floor reached before the model order".into());
                return Ok(finish(report, Some(&pf), Status::Undefined));
            }
        }
    }
    final_polish_path(&mut pf, opts)?;
    Ok(finish(report, Some(&pf), Status::Converged))
}

fn final_polish_path(pf: &mut PathFollower, opts: &EstimatorOptions) -> Result<()> {
    if opts.report_lambda_factor >= 1.0 {
        return Ok(());
    }
    let target = opts.report_lambda_factor * pf.state.lambda;
    // Stops at the target, at the next birth or just before a death.
    let _ = pf.advance(Mode::Polish { target })?;
    let lam = pf.state.lambda;
    if pf.lambda_path.last().is_some_and(|l| lam < l.0) {
        pf.lambda_path.push((lam, pf.state.len()));
    }
    Ok(())
}

/// Continues an `n`-atom state at its birth level towards
/// `report_lambda_factor * lambda` without admitting new atoms.
pub fn final_polish(
    model: &SteeringModel,
    x: &Snapshot,
    state: &SupportState,
    opts: &EstimatorOptions,
) -> Result<SupportState> {
    check_inputs(model, x, opts)?;
    let deadline = opts.deadline(Instant::now());
    let Some(mut pf) = PathFollower::start(model, &x.x, opts, None, deadline)? else {
        return Err(DoaError::NoPeak);
    };
    pf.state = state.clone();
    pf.births = state.len();
    final_polish_path(&mut pf, opts)?;
    Ok(pf.state)
}

/// Continuous l1 homotopy with marginalized jumps between singular points.
pub fn classo(model: &SteeringModel, x: &Snapshot, opts: &EstimatorOptions) -> Result<EstimateReport> {
    follow_path(Method::Classo, model, x, opts, None, Stepping::Jump)
}

/// Continuous l1 homotopy followed by equilevel steps.
pub fn classo_h(model: &SteeringModel, x: &Snapshot, opts: &EstimatorOptions) -> Result<EstimateReport> {
    follow_path(Method::ClassoH, model, x, opts, None, Stepping::Equilevel)
}

/// Uniform grid of `size` electrical angles over `[-pi, pi)`.
pub fn uniform_grid(size: usize) -> Vec<f64> {
    (0..size)
        .map(|i| -PI + 2.0 * PI * i as f64 / size as f64)
        .collect()
}

/// Grid-restricted homotopy with frozen atom angles.
pub fn sps_lasso(model: &SteeringModel, x: &Snapshot, opts: &EstimatorOptions) -> Result<EstimateReport> {
    if opts.grid_size < 2 * model.sensors() {
        return Err(DoaError::InvalidInput(format!(
            "grid_size {} must be at least 2m = {}",
            opts.grid_size,
            2 * model.sensors()
        )));
    }
    follow_path(
        Method::Sps,
        model,
        x,
        opts,
        Some(uniform_grid(opts.grid_size)),
        Stepping::Jump,
    )
}
