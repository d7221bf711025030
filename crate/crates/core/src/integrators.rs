//! Exponential time differencing steppers on Fourier coefficients.
//!
//! Every scheme advances each mode independently:
//!
//! ```text
//! u^{n+1} = e^{-tau K} u^n - phi0(K) S F^n - phi1(K) S (F^n - F^{n-1})
//! ```
//!
//! where `F` is the explicit term and `S` a per-mode prefactor.
//!
//! | scheme    | `K`                                       | `S`                          | `F`                       |
//! |-----------|-------------------------------------------|------------------------------|---------------------------|
//! | `Setdms2` | `eps^2 s^2 / (1 + A tau^2 s^2)`           | `1 / (1 + A tau^2 s^2)`      | `f_N(u)`                  |
//! | `Etdms2`  | `eps^2 s^2 - kappa s`                     | `1`                          | `f_N(u) + kappa s u`      |
//! | `Etd1`    | as `Etdms2`                               | `1`                          | as `Etdms2`, no `phi1`    |
//!
//! with `s` the Laplacian symbol. The first step after a (re)start drops the
//! `phi1` correction.

use std::fmt;

use num_complex::Complex64;

use crate::model::{Diagnostics, ModelParams, NssEvaluator};
use crate::spectral::{forward_transform, Field, GridSpec, SpectralField};

/// `(2 + sqrt 3) / 6`, the smallest `A` covered by the energy-stability
/// guarantee of the stabilized scheme.
pub const STABILITY_THRESHOLD: f64 = 0.622_008_467_928_146_2;

/// Below this value of `x tau` the phi-functions use their Taylor series.
pub const PHI_SERIES_THRESHOLD: f64 = 1e-3;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("multistep update needs the previous explicit term; run an initial step first")]
    MissingHistory,
    #[error("non-finite value in the solution after step {step} (t = {t})")]
    NonFinite { step: u64, t: f64 },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("state lives on a different grid than the symbol table")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Etd1,
    Etdms2,
    Setdms2,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Etd1 => "etd1",
            Scheme::Etdms2 => "etdms2",
            Scheme::Setdms2 => "setdms2",
        }
    }

    pub fn code(&self) -> u32 {
        match self {
            Scheme::Etd1 => 0,
            Scheme::Etdms2 => 1,
            Scheme::Setdms2 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Scheme::Etd1),
            1 => Some(Scheme::Etdms2),
            2 => Some(Scheme::Setdms2),
            _ => None,
        }
    }

    fn is_multistep(&self) -> bool {
        !matches!(self, Scheme::Etd1)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "etd1" => Ok(Scheme::Etd1),
            "etdms2" => Ok(Scheme::Etdms2),
            "setdms2" => Ok(Scheme::Setdms2),
            other => Err(format!("unknown scheme '{other}' (expected etd1, etdms2 or setdms2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub model: ModelParams,
    /// Stabilization constant `A` (stabilized scheme only).
    pub a: f64,
    /// Splitting constant `kappa` (ETD1 / ETDMs2 only).
    pub kappa: f64,
    pub scheme: Scheme,
}

impl SchemeParams {
    pub fn setdms2(model: ModelParams, a: f64) -> Self {
        Self { model, a, kappa: 0.125, scheme: Scheme::Setdms2 }
    }

    pub fn etdms2(model: ModelParams, kappa: f64) -> Self {
        Self { model, a: STABILITY_THRESHOLD, kappa, scheme: Scheme::Etdms2 }
    }

    pub fn etd1(model: ModelParams, kappa: f64) -> Self {
        Self { model, a: STABILITY_THRESHOLD, kappa, scheme: Scheme::Etd1 }
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(IntegratorError::Domain(format!("A must be >= 0, got {}", self.a)));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(IntegratorError::Domain(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if self.scheme == Scheme::Setdms2 && self.a < STABILITY_THRESHOLD {
            log::warn!(
                "A = {} is below (2 + sqrt 3)/6; energy stability is not guaranteed",
                self.a
            );
        }
        Ok(())
    }
}

/// `phi0(x) = (1 - e^{-x tau}) / x`, continuous at `x = 0` with value `tau`.
pub fn phi0_scalar(x: f64, tau: f64) -> Result<f64, IntegratorError> {
    check_phi_args(x, tau)?;
    let z = x * tau;
    if z < PHI_SERIES_THRESHOLD {
        // tau * sum_{n>=0} (-z)^n / (n+1)!
        Ok(tau * (1.0 - z / 2.0 * (1.0 - z / 3.0 * (1.0 - z / 4.0 * (1.0 - z / 5.0 * (1.0 - z / 6.0))))))
    } else {
        Ok(-(-z).exp_m1() / x)
    }
}

/// `phi1(x) = (1 - (1 - e^{-x tau}) / (x tau)) / x`, with `phi1(0) = tau / 2`.
pub fn phi1_scalar(x: f64, tau: f64) -> Result<f64, IntegratorError> {
    check_phi_args(x, tau)?;
    let z = x * tau;
    if z < PHI_SERIES_THRESHOLD {
        // tau * sum_{n>=0} (-z)^n / (n+2)!
        Ok(tau
            * (0.5
                - z / 6.0
                    * (1.0 - z / 4.0 * (1.0 - z / 5.0 * (1.0 - z / 6.0 * (1.0 - z / 7.0))))))
    } else {
        Ok((z + (-z).exp_m1()) / (x * z))
    }
}

fn check_phi_args(x: f64, tau: f64) -> Result<(), IntegratorError> {
    if !(x >= 0.0) {
        return Err(IntegratorError::Domain(format!("phi argument must be >= 0, got {x}")));
    }
    if !(tau > 0.0) {
        return Err(IntegratorError::Domain(format!("tau must be > 0, got {tau}")));
    }
    Ok(())
}

/// Per-mode multipliers for one `(grid, params, tau)` combination.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    grid: GridSpec,
    tau: f64,
    scheme: Scheme,
    kappa_explicit: f64,
    s_lap: Vec<f64>,
    k: Vec<f64>,
    exp_k: Vec<f64>,
    phi0: Vec<f64>,
    phi1: Vec<f64>,
    stab_inv: Vec<f64>,
}

impl SymbolTable {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
    pub fn s_lap(&self) -> &[f64] {
        &self.s_lap
    }
    pub fn k(&self) -> &[f64] {
        &self.k
    }
    pub fn exp_k(&self) -> &[f64] {
        &self.exp_k
    }
    pub fn phi0(&self) -> &[f64] {
        &self.phi0
    }
    pub fn phi1(&self) -> &[f64] {
        &self.phi1
    }
    pub fn stab_inv(&self) -> &[f64] {
        &self.stab_inv
    }
    /// Coefficient of `s u` added to `f_N` in the explicit term.
    pub fn kappa_explicit(&self) -> f64 {
        self.kappa_explicit
    }

    pub fn flat(&self, k: i64, l: i64) -> usize {
        self.grid.index(k) * self.grid.points() + self.grid.index(l)
    }
}

pub fn build_symbols(
    grid: &GridSpec,
    p: &SchemeParams,
    tau: f64,
) -> Result<SymbolTable, IntegratorError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(IntegratorError::Domain(format!("tau must be > 0, got {tau}")));
    }
    let n = grid.len();
    let eps2 = p.model.eps2;
    let mut t = SymbolTable {
        grid: *grid,
        tau,
        scheme: p.scheme,
        kappa_explicit: 0.0,
        s_lap: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        exp_k: Vec::with_capacity(n),
        phi0: Vec::with_capacity(n),
        phi1: Vec::with_capacity(n),
        stab_inv: Vec::with_capacity(n),
    };
    if p.scheme != Scheme::Setdms2 {
        t.kappa_explicit = p.kappa;
    }
    for idx in 0..n {
        let s = grid.laplacian_symbol(idx);
        let (k, stab) = match p.scheme {
            Scheme::Setdms2 => {
                let stab = 1.0 / (1.0 + p.a * tau * tau * s * s);
                (eps2 * s * s * stab, stab)
            }
            Scheme::Etd1 | Scheme::Etdms2 => (eps2 * s * s - p.kappa * s, 1.0),
        };
        t.s_lap.push(s);
        t.k.push(k);
        t.exp_k.push((-k * tau).exp());
        t.phi0.push(phi0_scalar(k, tau)?);
        t.phi1.push(phi1_scalar(k, tau)?);
        t.stab_inv.push(stab);
    }
    Ok(t)
}

/// Source of the explicit term `F` (before the `kappa s u` part and the
/// stabilizing prefactor are applied).
pub trait NonlinearTerm {
    /// Writes the spectral coefficients of the term at state `u_hat`, time `t`.
    fn eval(&mut self, u_hat: &SpectralField, t: f64, out: &mut SpectralField);
}

/// `f_N` of the thin-film model.
pub struct NssTerm {
    eval: NssEvaluator,
}

impl NssTerm {
    pub fn new(grid: GridSpec, model: &ModelParams) -> Self {
        Self { eval: NssEvaluator::new(grid, model.dealias) }
    }
}

impl NonlinearTerm for NssTerm {
    fn eval(&mut self, u_hat: &SpectralField, _t: f64, out: &mut SpectralField) {
        self.eval.nonlinear_hat(u_hat, out);
    }
}

/// Identically zero term: the pure linear flow.
pub struct LinearOnly;

impl NonlinearTerm for LinearOnly {
    fn eval(&mut self, _u_hat: &SpectralField, _t: f64, out: &mut SpectralField) {
        out.coeffs_mut().iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
    }
}

impl<T: NonlinearTerm + ?Sized> NonlinearTerm for Box<T> {
    fn eval(&mut self, u_hat: &SpectralField, t: f64, out: &mut SpectralField) {
        (**self).eval(u_hat, t, out)
    }
}

/// Solution at one time level plus the multistep history.
#[derive(Debug, Clone, PartialEq)]
pub struct StepperState {
    pub t: f64,
    pub step_index: u64,
    /// Fourier coefficients of the current solution.
    pub u_hat: SpectralField,
    /// Explicit term `F` at the previous time level, present once a step has
    /// completed since the last (re)start.
    pub f_prev: Option<SpectralField>,
}

impl StepperState {
    pub fn new(u0: &Field, t0: f64) -> Self {
        Self { t: t0, step_index: 0, u_hat: forward_transform(u0), f_prev: None }
    }

    pub fn grid(&self) -> &GridSpec {
        self.u_hat.grid()
    }

    /// Nodal values of the current solution.
    pub fn u_curr(&self) -> Field {
        NssEvaluator::new(*self.grid(), false).field(&self.u_hat)
    }

    pub fn mass(&self) -> f64 {
        self.u_hat.coeff(0, 0).re
    }

    /// Forgets the multistep history; the next step is a one-step start.
    pub fn restart(&mut self) {
        self.f_prev = None;
    }
}

/// Advances a [`StepperState`] with one scheme and step size.
pub struct Stepper<N: NonlinearTerm> {
    symbols: SymbolTable,
    term: N,
    f_now: SpectralField,
}

impl<N: NonlinearTerm> Stepper<N> {
    pub fn new(symbols: SymbolTable, term: N) -> Self {
        let grid = *symbols.grid();
        Self { symbols, term, f_now: SpectralField::zeros(grid) }
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn set_symbols(&mut self, symbols: SymbolTable) {
        self.symbols = symbols;
    }

    pub fn term_mut(&mut self) -> &mut N {
        &mut self.term
    }

    pub fn into_term(self) -> N {
        self.term
    }

    fn explicit_term(&mut self, state: &StepperState) {
        self.term.eval(&state.u_hat, state.t, &mut self.f_now);
        let kappa = self.symbols.kappa_explicit;
        if kappa != 0.0 {
            for ((f, &s), &u) in self
                .f_now
                .coeffs_mut()
                .iter_mut()
                .zip(&self.symbols.s_lap)
                .zip(state.u_hat.coeffs())
            {
                *f += u * (kappa * s);
            }
        }
        self.f_now.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
    }

    /// One-step start: `u^1 = e^{-tau K} u^0 - phi0(K) S F^0`.
    pub fn init_step(&mut self, state: &mut StepperState) -> Result<(), IntegratorError> {
        self.check_grid(state)?;
        self.explicit_term(state);
        let st = &self.symbols;
        for (i, u) in state.u_hat.coeffs_mut().iter_mut().enumerate() {
            let f = self.f_now.coeffs()[i];
            *u = *u * st.exp_k[i] - (f * st.phi0[i]) * st.stab_inv[i];
        }
        self.finish(state)
    }

    /// Two-level update including the `phi1` correction. Needs `f_prev`.
    pub fn multistep(&mut self, state: &mut StepperState) -> Result<(), IntegratorError> {
        self.check_grid(state)?;
        if state.f_prev.is_none() {
            return Err(IntegratorError::MissingHistory);
        }
        self.explicit_term(state);
        let st = &self.symbols;
        let prev = state.f_prev.as_ref().map(|f| f.coeffs()).unwrap_or(&[]);
        let now = self.f_now.coeffs();
        for (i, u) in state.u_hat.coeffs_mut().iter_mut().enumerate() {
            let f = now[i];
            let df = f - prev[i];
            *u = *u * st.exp_k[i] - (f * st.phi0[i] + df * st.phi1[i]) * st.stab_inv[i];
        }
        self.finish(state)
    }

    /// Scheme-appropriate step: one-step formula for ETD1 or when there is no
    /// history, the multistep formula otherwise.
    pub fn step(&mut self, state: &mut StepperState) -> Result<(), IntegratorError> {
        if self.symbols.scheme.is_multistep() && state.f_prev.is_some() {
            self.multistep(state)
        } else {
            self.init_step(state)
        }
    }

    fn finish(&mut self, state: &mut StepperState) -> Result<(), IntegratorError> {
        state.t += self.symbols.tau;
        state.step_index += 1;
        match state.f_prev.as_mut() {
            Some(prev) => prev.coeffs_mut().copy_from_slice(self.f_now.coeffs()),
            None => state.f_prev = Some(self.f_now.clone()),
        }
        if !state.u_hat.is_finite() {
            return Err(IntegratorError::NonFinite { step: state.step_index, t: state.t });
        }
        Ok(())
    }

    fn check_grid(&self, state: &StepperState) -> Result<(), IntegratorError> {
        if state.grid() == self.symbols.grid() {
            Ok(())
        } else {
            Err(IntegratorError::GridMismatch)
        }
    }
}

/// `u^1` of the stabilized scheme from `u^0`.
pub fn setdms2_init_step(u0: &Field, st: &SymbolTable, model: &ModelParams) -> Result<Field, IntegratorError> {
    let mut state = StepperState::new(u0, 0.0);
    let mut stepper = Stepper::new(st.clone(), NssTerm::new(*u0.grid(), model));
    stepper.init_step(&mut state)?;
    Ok(state.u_curr())
}

/// One multistep update of the stabilized scheme.
pub fn setdms2_step(
    state: &StepperState,
    st: &SymbolTable,
    model: &ModelParams,
) -> Result<StepperState, IntegratorError> {
    let mut next = state.clone();
    Stepper::new(st.clone(), NssTerm::new(*st.grid(), model)).multistep(&mut next)?;
    Ok(next)
}

/// One ETD1 step; the symbol table must be built for [`Scheme::Etd1`] or
/// [`Scheme::Etdms2`].
pub fn etd1_step(
    state: &StepperState,
    st: &SymbolTable,
    model: &ModelParams,
) -> Result<StepperState, IntegratorError> {
    let mut next = state.clone();
    Stepper::new(st.clone(), NssTerm::new(*st.grid(), model)).init_step(&mut next)?;
    Ok(next)
}

/// One ETDMs2 multistep update.
pub fn etdms2_step(
    state: &StepperState,
    st: &SymbolTable,
    model: &ModelParams,
) -> Result<StepperState, IntegratorError> {
    setdms2_step(state, st, model)
}

/// One constant-step piece of a schedule, ending at `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t_end: f64,
    pub tau: f64,
}

/// Piecewise-constant step sizes starting from `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    segments: Vec<Segment>,
}

impl StepSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self, IntegratorError> {
        let mut start = 0.0;
        for (i, s) in segments.iter().enumerate() {
            if !(s.tau > 0.0 && s.tau.is_finite()) {
                return Err(IntegratorError::Schedule(format!("segment {i}: tau must be > 0")));
            }
            if !(s.t_end >= start && s.t_end.is_finite()) || (i > 0 && s.t_end <= start) {
                return Err(IntegratorError::Schedule(format!(
                    "segment {i}: end {} does not follow {start}",
                    s.t_end
                )));
            }
            let ratio = (s.t_end - start) / s.tau;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                return Err(IntegratorError::Schedule(format!(
                    "segment {i}: length {} is not a multiple of tau = {}",
                    s.t_end - start,
                    s.tau
                )));
            }
            start = s.t_end;
        }
        Ok(Self { segments })
    }

    /// A single segment `[0, horizon]` with step `tau`.
    pub fn uniform(tau: f64, horizon: f64) -> Result<Self, IntegratorError> {
        Self::new(vec![Segment { t_end: horizon, tau }])
    }

    /// Steps `(tau, until)` in order, truncated at `horizon`. A final `until`
    /// of `f64::INFINITY` extends to the horizon.
    pub fn piecewise(breaks: &[(f64, f64)], horizon: f64) -> Result<Self, IntegratorError> {
        let mut segs = Vec::new();
        let mut start = 0.0;
        for &(tau, until) in breaks {
            if start >= horizon {
                break;
            }
            let end = until.min(horizon);
            segs.push(Segment { t_end: end, tau });
            start = end;
        }
        if start < horizon {
            return Err(IntegratorError::Schedule(format!("breaks end at {start} before horizon {horizon}")));
        }
        Self::new(segs)
    }

    /// The step sizes used for the long coarsening runs, truncated at `horizon`.
    pub fn coarsening(horizon: f64) -> Result<Self, IntegratorError> {
        Self::piecewise(&[(0.001, 200.0), (0.01, 1000.0), (0.02, 2000.0), (0.04, f64::INFINITY)], horizon)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    pub fn segment_start(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.segments[i - 1].t_end
        }
    }

    pub fn steps_in(&self, i: usize) -> u64 {
        let s = self.segments[i];
        ((s.t_end - self.segment_start(i)) / s.tau).round() as u64
    }

    /// Step size that sample targets snap with at this schedule position: the
    /// step that produced it, or the first step for the initial state.
    pub fn snap_tau(&self, segment: usize, steps_in_segment: u64) -> f64 {
        let i = if steps_in_segment == 0 && segment > 0 { segment - 1 } else { segment };
        self.segments.get(i).or(self.segments.last()).map_or(0.0, |s| s.tau)
    }

    pub fn total_steps(&self) -> u64 {
        (0..self.segments.len()).map(|i| self.steps_in(i)).sum()
    }
}

/// When diagnostics are recorded: after every step up to `every_step_until`,
/// then at geometrically spaced targets, plus any `extra_times`. Each target
/// snaps to the nearest completed step.
#[derive(Debug, Clone, PartialEq)]
pub struct Cadence {
    pub every_step_until: f64,
    pub per_decade: f64,
    pub extra_times: Vec<f64>,
}

impl Default for Cadence {
    fn default() -> Self {
        Self { every_step_until: 10.0, per_decade: 200.0, extra_times: Vec::new() }
    }
}

impl Cadence {
    pub fn every_step() -> Self {
        Self { every_step_until: f64::INFINITY, per_decade: 1.0, extra_times: Vec::new() }
    }

    /// Only the initial and final states.
    pub fn endpoints() -> Self {
        Self { every_step_until: -1.0, per_decade: 0.0, extra_times: Vec::new() }
    }

    fn targets(&self, horizon: f64) -> Vec<f64> {
        let mut out = self.extra_times.clone();
        if self.per_decade > 0.0 && self.every_step_until > 0.0 && self.every_step_until.is_finite() {
            let mut k = 1.0;
            loop {
                let t = self.every_step_until * 10f64.powf(k / self.per_decade);
                if t > horizon * (1.0 + 1e-12) {
                    break;
                }
                out.push(t);
                k += 1.0;
            }
        }
        out.retain(|t| t.is_finite());
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }
}

/// Position inside a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub stepper: StepperState,
    pub segment: usize,
    pub steps_in_segment: u64,
}

impl RunState {
    pub fn start(u0: &Field) -> Self {
        Self { stepper: StepperState::new(u0, 0.0), segment: 0, steps_in_segment: 0 }
    }

    pub fn is_fresh(&self) -> bool {
        self.segment == 0 && self.steps_in_segment == 0 && self.stepper.step_index == 0
    }
}

/// Drives a [`Stepper`] through a [`StepSchedule`], restarting the multistep
/// history (one-step start) at every segment boundary.
pub struct Runner<N: NonlinearTerm> {
    params: SchemeParams,
    schedule: StepSchedule,
    term: Option<N>,
    cadence: Cadence,
    stop_at: Option<f64>,
}

impl<N: NonlinearTerm> Runner<N> {
    pub fn new(params: SchemeParams, schedule: StepSchedule, term: N) -> Self {
        Self { params, schedule, term: Some(term), cadence: Cadence::default(), stop_at: None }
    }

    pub fn cadence(mut self, cadence: Cadence) -> Self {
        self.cadence = cadence;
        self
    }

    /// Halt once `t` reaches this time (snapped to a completed step). The
    /// halting state is only sampled if it is a regular sample time.
    pub fn stop_at(mut self, t: Option<f64>) -> Self {
        self.stop_at = t;
        self
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    /// Runs from `state` until the schedule ends (or `stop_at`), calling
    /// `observer` at every sample time.
    pub fn run(
        &mut self,
        mut state: RunState,
        mut observer: impl FnMut(&RunState, &Diagnostics),
    ) -> Result<RunState, IntegratorError> {
        self.params.validate()?;
        let grid = *state.stepper.grid();
        let mut diag = NssEvaluator::new(grid, false);
        let eps2 = self.params.model.eps2;
        let targets = self.cadence.targets(self.schedule.horizon());
        // Targets that snap to `state` or earlier were handled already.
        let snap = self.schedule.snap_tau(state.segment, state.steps_in_segment);
        let reach = state.stepper.t + (0.5 * snap).max(1e-12);
        let mut next_target = targets.partition_point(|&t| t <= reach);

        let mut sample = |state: &RunState, observer: &mut dyn FnMut(&RunState, &Diagnostics)| {
            let d = diag.diagnostics(&state.stepper.u_hat, state.stepper.t, eps2);
            observer(state, &d);
        };

        if state.is_fresh() {
            sample(&state, &mut observer);
        }
        let term = self.term.take().expect("runner term present");
        let mut stepper: Option<Stepper<N>> = None;
        let mut pending = Some(term);
        let mut last_sampled = state.stepper.step_index;

        let result = (|| {
            while state.segment < self.schedule.segments().len() {
                let seg = self.schedule.segments()[state.segment];
                let n_steps = self.schedule.steps_in(state.segment);
                if state.steps_in_segment >= n_steps {
                    state.segment += 1;
                    state.steps_in_segment = 0;
                    continue;
                }
                if let Some(t) = self.stop_at {
                    if state.stepper.t >= t - 0.5 * seg.tau {
                        break;
                    }
                }
                if seg.tau > 0.125 {
                    log::warn!("tau = {} exceeds 1/8; convergence theory does not cover it", seg.tau);
                }
                let symbols = build_symbols(&grid, &self.params, seg.tau)?;
                match stepper.as_mut() {
                    Some(s) => s.set_symbols(symbols),
                    None => stepper = Some(Stepper::new(symbols, pending.take().expect("term"))),
                }
                let s = stepper.as_mut().expect("stepper");
                if state.steps_in_segment == 0 {
                    state.stepper.restart();
                }
                let seg_start = self.schedule.segment_start(state.segment);
                while state.steps_in_segment < n_steps {
                    if let Some(t) = self.stop_at {
                        if state.stepper.t >= t - 0.5 * seg.tau {
                            break;
                        }
                    }
                    s.step(&mut state.stepper)?;
                    state.steps_in_segment += 1;
                    state.stepper.t = seg_start + state.steps_in_segment as f64 * seg.tau;
                    if state.steps_in_segment == n_steps {
                        state.stepper.t = seg.t_end;
                    }
                    let t = state.stepper.t;
                    let mut due = t <= self.cadence.every_step_until * (1.0 + 1e-12);
                    while next_target < targets.len() && targets[next_target] <= t + 0.5 * seg.tau {
                        due = true;
                        next_target += 1;
                    }
                    if due {
                        sample(&state, &mut observer);
                        last_sampled = state.stepper.step_index;
                    }
                }
                if state.steps_in_segment >= n_steps {
                    state.segment += 1;
                    state.steps_in_segment = 0;
                } else {
                    break;
                }
            }
            let finished = state.segment >= self.schedule.segments().len();
            if finished && last_sampled != state.stepper.step_index {
                sample(&state, &mut observer);
            }
            Ok(())
        })();

        self.term = match (stepper, pending) {
            (Some(s), _) => Some(s.into_term()),
            (None, p) => p,
        };
        result.map(|_| state)
    }
}

/// Runs the thin-film model from `u0` through `sched`, returning the final
/// state. `observer` receives diagnostics at the cadence's sample times.
pub fn run(
    u0: &Field,
    p: &SchemeParams,
    sched: &StepSchedule,
    cadence: Cadence,
    observer: impl FnMut(&RunState, &Diagnostics),
) -> Result<StepperState, IntegratorError> {
    let term = NssTerm::new(*u0.grid(), &p.model);
    let mut runner = Runner::new(*p, sched.clone(), term).cadence(cadence);
    Ok(runner.run(RunState::start(u0), observer)?.stepper)
}
