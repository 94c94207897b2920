//! Homotopy path follower shared by the l1 estimators.
//!
//! The follower keeps a support state that satisfies the penalized
//! stationarity system at its own `lambda` and moves it towards smaller
//! levels. Two kinds of move are available: smooth equilevel steps
//! (`advance`) and marginalized jumps straight to the next singular level
//! (`jump`). Births, deaths and the level floor are reported as events.

use std::time::Instant;

use num_complex::Complex64;

use super::EstimatorOptions;
use crate::array_model::{circular_distance, inner, modulus, norm, SteeringModel};
use crate::error::{DoaError, Result};
use crate::newton::{
    attractor_f, attractor_g, attractor_h, attractor_h_frozen, NewtonOutcome, SupportState,
};
use crate::spectrum::{local_maxima, refine_local_max, PeakResult};

/// What stopped an `advance` call.
#[derive(Debug, Clone)]
pub(crate) enum Event {
    /// The off-support peak reached the current level.
    BirthDue(PeakResult),
    /// Atom `index` reached zero modulus; the state is positioned just before
    /// the sign change and the atom is still present.
    Death(usize),
    ReachedTarget,
    Floor,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Mode {
    /// Decrease lambda until the next birth.
    Birth,
    /// Decrease lambda towards `target`, stopping early at a birth.
    Polish { target: f64 },
}

pub(crate) struct PathFollower<'a> {
    model: &'a SteeringModel,
    x: &'a [Complex64],
    opts: &'a EstimatorOptions,
    grid: Option<Vec<f64>>,
    guard: f64,
    xnorm: f64,
    deadline: Option<Instant>,
    pub state: SupportState,
    pub births: usize,
    pub lambda0: f64,
    pub lambda_path: Vec<(f64, usize)>,
    pub steps: usize,
    pub h_steps: usize,
    pub events: usize,
}

fn phasor(z: Complex64) -> Complex64 {
    let m = modulus(z);
    if m > 0.0 {
        z / m
    } else {
        Complex64::new(1.0, 0.0)
    }
}

impl<'a> PathFollower<'a> {
    /// Places the first atom at the global peak of `|a^H x|` with `r = 0`.
    /// Returns `None` when the data spectrum has no peak at all.
    pub fn start(
        model: &'a SteeringModel,
        x: &'a [Complex64],
        opts: &'a EstimatorOptions,
        grid: Option<Vec<f64>>,
        deadline: Option<Instant>,
    ) -> Result<Option<Self>> {
        let guard = opts.guard_for(model.sensors());
        let mut pf = Self {
            model,
            x,
            opts,
            grid,
            guard,
            xnorm: norm(x),
            deadline,
            state: SupportState::empty(0.0),
            births: 0,
            lambda0: 0.0,
            lambda_path: Vec::new(),
            steps: 0,
            h_steps: 0,
            events: 0,
        };
        let Some(peak) = pf.peak_of(&pf.state.clone()) else {
            return Ok(None);
        };
        if !(peak.p > 0.0) {
            return Ok(None);
        }
        pf.lambda0 = peak.p;
        pf.state.lambda = peak.p;
        let z = inner(&model.steering(peak.phi), x);
        pf.state.push_atom(peak.phi, 0.0, phasor(z));
        pf.births = 1;
        pf.record(peak.p);
        Ok(Some(pf))
    }

    fn frozen(&self) -> bool {
        self.grid.is_some()
    }

    fn check_deadline(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() > d => Err(DoaError::TimeBudget),
            _ => Ok(()),
        }
    }

    fn record(&mut self, lambda: f64) {
        let size = self.state.len();
        match self.lambda_path.last_mut() {
            Some(last) if last.0 <= lambda => last.1 = size,
            _ => self.lambda_path.push((lambda, size)),
        }
    }

    /// All admissible off-support peaks of the residual spectrum, highest
    /// first. On a grid every grid point outside the guard of the support is
    /// a candidate.
    pub fn candidates(&self, state: &SupportState) -> Vec<PeakResult> {
        let nhat = state.residual(self.model, self.x);
        match &self.grid {
            None => local_maxima(self.model, &nhat, &state.support, self.guard, &self.opts.search),
            Some(grid) => {
                let mut out: Vec<PeakResult> = grid
                    .iter()
                    .filter(|&&g| !state.support.iter().any(|&s| circular_distance(s, g) <= self.guard))
                    .map(|&g| PeakResult {
                        phi: g,
                        p: modulus(inner(&self.model.steering(g), &nhat)),
                        is_local_max: false,
                    })
                    .collect();
                out.sort_by(|a, b| b.p.total_cmp(&a.p).then(a.phi.total_cmp(&b.phi)));
                out
            }
        }
    }

    /// Highest off-support peak, `None` for a flat residual spectrum.
    pub fn peak_of(&self, state: &SupportState) -> Option<PeakResult> {
        self.candidates_top(state)
    }

    fn candidates_top(&self, state: &SupportState) -> Option<PeakResult> {
        match &self.grid {
            None => {
                let nhat = state.residual(self.model, self.x);
                local_maxima(self.model, &nhat, &state.support, self.guard, &self.opts.search)
                    .into_iter()
                    .next()
            }
            Some(_) => self.candidates(state).into_iter().next(),
        }
    }

    fn h_solve(&self, state: &SupportState, lambda: f64) -> Result<NewtonOutcome> {
        if self.frozen() {
            attractor_h_frozen(self.model, self.x, state, lambda, &self.opts.newton)
        } else {
            attractor_h(self.model, self.x, state, lambda, &self.opts.newton)
        }
    }

    fn birth_tol(&self) -> f64 {
        self.opts.birth_tol
    }

    /// Appends a new atom at `peak` with zero modulus and the phase of the
    /// residual correlation there, then re-solves at the current level.
    pub fn add_atom(&mut self, peak: &PeakResult) {
        let nhat = self.state.residual(self.model, self.x);
        let z = inner(&self.model.steering(peak.phi), &nhat);
        let mut st = self.state.clone();
        st.push_atom(peak.phi, 0.0, phasor(z));
        if let Ok(out) = self.h_solve(&st, st.lambda) {
            st = out.state;
        }
        self.state = st;
        self.births += 1;
        self.events += 1;
        let lam = self.state.lambda;
        self.record(lam);
    }

    /// Removes a dead atom and re-solves at the current level.
    pub fn remove_atom(&mut self, index: usize) -> Result<()> {
        let mut st = self.state.clone();
        st.remove_atom(index);
        if st.is_empty() {
            return Err(DoaError::PathDeath);
        }
        if let Ok(out) = self.h_solve(&st, st.lambda) {
            st = out.state;
        }
        self.state = st;
        self.births = self.births.saturating_sub(1);
        self.events += 1;
        let lam = self.state.lambda;
        self.record(lam);
        Ok(())
    }

    /// Newton solve towards `lambda_new`, halving the step on failure.
    /// Returns the reached level and outcome, or the negative-amplitude event.
    fn step_to(&self, lambda_new: f64) -> Result<(f64, std::result::Result<NewtonOutcome, usize>)> {
        let lam = self.state.lambda;
        let mut target = lambda_new;
        let mut last_err = None;
        for _ in 0..40 {
            match self.h_solve(&self.state, target) {
                Ok(out) => return Ok((target, Ok(out))),
                Err(DoaError::NegativeAmplitude { index, .. }) => return Ok((target, Err(index))),
                Err(e @ DoaError::InvalidInput(_)) => return Err(e),
                Err(e) => {
                    last_err = Some(e);
                    target = 0.5 * (lam + target);
                    if lam - target <= 1e-15 * lam {
                        break;
                    }
                }
            }
        }
        Err(last_err.unwrap_or(DoaError::NonConvergence {
            iterations: 0,
            residual: f64::NAN,
        }))
    }

    /// Bisects in lambda between the current (safe) state and `lo`, where
    /// atom `index` has a negative modulus, and positions the state at the
    /// last level with a non-negative modulus.
    fn locate_death(&mut self, mut lo: f64, index: usize) -> Result<()> {
        let mut hi_state = self.state.clone();
        for _ in 0..60 {
            let hi = hi_state.lambda;
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            match self.h_solve(&hi_state, mid) {
                Ok(out) => {
                    let small = out.state.r[index] <= 1e-12 * self.xnorm;
                    hi_state = out.state;
                    if small {
                        break;
                    }
                }
                Err(DoaError::NegativeAmplitude { .. }) => lo = mid,
                Err(_) => lo = mid,
            }
        }
        self.state = hi_state;
        Ok(())
    }

    /// Bisects in lambda between the current (safe) state and an
    /// overshooting level `lo`, stopping where the off-support peak matches
    /// the level within the birth tolerance.
    fn locate_birth(&mut self, mut lo: f64) -> Result<Event> {
        let eps = self.birth_tol();
        let mut hi_state = self.state.clone();
        for _ in 0..80 {
            self.check_deadline()?;
            let hi = hi_state.lambda;
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-15 * hi {
                break;
            }
            let out = match self.h_solve(&hi_state, mid) {
                Ok(out) => out,
                Err(DoaError::NegativeAmplitude { index, .. }) => {
                    // A death precedes the birth.
                    self.state = hi_state;
                    self.locate_death(mid, index)?;
                    return Ok(Event::Death(index));
                }
                Err(_) => {
                    lo = mid;
                    continue;
                }
            };
            self.h_steps += 1;
            match self.peak_of(&out.state) {
                Some(pk) if (pk.p - mid).abs() <= eps * mid => {
                    self.state = out.state;
                    return Ok(Event::BirthDue(pk));
                }
                Some(pk) if pk.p > mid => lo = mid,
                _ => hi_state = out.state,
            }
        }
        self.state = hi_state;
        match self.peak_of(&self.state) {
            Some(pk) => Ok(Event::BirthDue(pk)),
            None => Ok(Event::Floor),
        }
    }

    /// Equilevel continuation with the update `lambda <- mu lambda + (1 - mu) p`.
    /// In polish mode the level moves straight to the target and only
    /// bisects when a birth or death lies in between.
    pub fn advance(&mut self, mode: Mode) -> Result<Event> {
        if let Mode::Polish { target } = mode {
            return self.polish_to(target);
        }
        let eps = self.birth_tol();
        let mu = self.opts.mu;
        let floor = self.opts.lambda_floor * self.lambda0;
        let mut stalled = 0usize;
        loop {
            self.check_deadline()?;
            self.steps += 1;
            let lam = self.state.lambda;
            let peak = self.peak_of(&self.state);
            let p = peak.map_or(0.0, |pk| pk.p);
            if let Some(pk) = peak {
                if p >= lam * (1.0 - eps) {
                    return Ok(Event::BirthDue(pk));
                }
            }
            let next = mu * lam + (1.0 - mu) * p;
            if next < floor {
                return Ok(Event::Floor);
            }
            let (reached, outcome) = self.step_to(next)?;
            let out = match outcome {
                Ok(out) => out,
                Err(index) => {
                    self.locate_death(reached, index)?;
                    return Ok(Event::Death(index));
                }
            };
            self.h_steps += 1;
            match self.peak_of(&out.state) {
                Some(pk) if pk.p > reached * (1.0 + eps) => {
                    return self.locate_birth(reached);
                }
                _ => {}
            }
            if lam - reached < 1e-14 * self.lambda0 {
                stalled += 1;
                if stalled >= 10 {
                    return Err(DoaError::StallDetected(stalled));
                }
            } else {
                stalled = 0;
            }
            self.state = out.state;
        }
    }

    fn polish_to(&mut self, target: f64) -> Result<Event> {
        let eps = self.birth_tol();
        loop {
            self.check_deadline()?;
            let lam = self.state.lambda;
            if lam <= target {
                return Ok(Event::ReachedTarget);
            }
            if let Some(pk) = self.peak_of(&self.state) {
                if pk.p >= lam * (1.0 - eps) {
                    return Ok(Event::BirthDue(pk));
                }
            }
            self.steps += 1;
            let (reached, outcome) = self.step_to(target)?;
            let out = match outcome {
                Ok(out) => out,
                Err(index) => {
                    self.locate_death(reached, index)?;
                    return Ok(Event::Death(index));
                }
            };
            self.h_steps += 1;
            if let Some(pk) = self.peak_of(&out.state) {
                if pk.p > reached * (1.0 + eps) {
                    return self.locate_birth(reached);
                }
            }
            self.state = out.state;
        }
    }

    /// Marginalized jump to the next singular level. Every admissible peak
    /// is probed; on the continuum each probe is moved to the local maximum
    /// of the spectrum at the candidate level until it settles. Returns
    /// `false` when no jump could be certified, leaving the state untouched.
    pub fn jump(&mut self) -> Result<bool> {
        self.check_deadline()?;
        let lam = self.state.lambda;
        let mut best: Option<(SupportState, f64, bool)> = None;
        for cand in self.candidates(&self.state) {
            self.check_deadline()?;
            let Some((st, phi, negative)) = self.probe_candidate(cand.phi) else {
                continue;
            };
            let better = best.as_ref().is_none_or(|(b, _, _)| st.lambda > b.lambda);
            if better {
                best = Some((st, phi, negative));
            }
        }
        let Some((st, phi, negative)) = best else {
            return Ok(false);
        };
        if negative || !(st.lambda <= lam) || st.lambda < self.opts.lambda_floor * self.lambda0 {
            return Ok(false);
        }
        // Certificate: with the new atom in place nothing else may exceed
        // the level.
        let nhat = st.residual(self.model, self.x);
        let z = inner(&self.model.steering(phi), &nhat);
        let mut with_new = st.clone();
        with_new.push_atom(phi, 0.0, phasor(z));
        let eps = self.birth_tol();
        // The touching row is quadratic in the level, so check the contact
        // itself relative to the level.
        if (modulus(z) - st.lambda).abs() > eps * st.lambda {
            return Ok(false);
        }
        if let Some(pk) = self.peak_of(&with_new) {
            if pk.p > with_new.lambda * (1.0 + eps) {
                return Ok(false);
            }
        }
        self.state = st;
        self.steps += 1;
        self.add_atom(&PeakResult {
            phi,
            p: modulus(z),
            is_local_max: true,
        });
        Ok(true)
    }

    /// Runs the marginalized attractor for one candidate. Returns the state
    /// at the candidate level, the settled probe and whether some amplitude
    /// crossed zero on the way.
    fn probe_candidate(&self, phi0: f64) -> Option<(SupportState, f64, bool)> {
        let newton = &self.opts.newton;
        let m = self.model.sensors() as f64;
        let mut start = self.state.clone();
        let mut phi = phi0;
        let attempts = if self.frozen() { 1 } else { 30 };
        for _ in 0..attempts {
            let res = if self.frozen() {
                attractor_g(self.model, self.x, &start, phi, newton)
            } else {
                attractor_f(self.model, self.x, &start, phi, newton)
            };
            let st = match res {
                Ok(out) => out.state,
                Err(DoaError::NegativeAmplitude { state, .. }) => {
                    return (state.lambda <= self.state.lambda).then_some((*state, phi, true));
                }
                Err(_) => return None,
            };
            if self.frozen() {
                return Some((st, phi, false));
            }
            let nhat = st.residual(self.model, self.x);
            let pk = refine_local_max(self.model, &nhat, phi, 2.0 * std::f64::consts::PI / m);
            if st
                .support
                .iter()
                .any(|&s| circular_distance(s, pk.phi) <= self.guard)
            {
                return None;
            }
            if circular_distance(pk.phi, phi) < 1e-11 {
                return Some((st, phi, false));
            }
            phi = pk.phi;
            start = st;
        }
        None
    }
}
