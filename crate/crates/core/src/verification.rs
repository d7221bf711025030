//! Manufactured-solution checks on `[0, 2 pi]^2`.
//!
//! With the source `g` below, `u_e(x, y, t) = sin x cos y cos t` solves
//! `u_t = -eps^2 Delta^2 u - div beta(grad u) + g`. Forced runs fold `-g`
//! into the explicit slot of the schemes, evaluated at the same time levels
//! as `f_N`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::integrators::{
    Cadence, IntegratorError, NonlinearTerm, RunState, Runner, SchemeParams, StepSchedule,
};
use crate::model::{nonlinear_term, ModelParams, NssEvaluator};
use crate::spectral::{bilaplacian, norm, Fft2, Field, GridSpec, SpectralError, SpectralField};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum VerificationError {
    #[error("exact solution has norm {0:e} at the requested time; relative error undefined")]
    DegenerateNorm(f64),
    #[error("convergence study needs step sizes halving at each level")]
    StepSizes,
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Source term that makes `sin x cos y cos t` an exact solution.
pub fn forcing(x: f64, y: f64, t: f64, p: &ModelParams) -> f64 {
    let (sx, cx) = x.sin_cos();
    let (sy, cy) = y.sin_cos();
    let (st, ct) = t.sin_cos();
    let (s2x, c2x) = (2.0 * x).sin_cos();
    let (s2y, c2y) = (2.0 * y).sin_cos();
    forcing_terms(sx, cx, sy, cy, s2x, c2x, s2y, c2y, st, ct, p.eps2)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn forcing_terms(
    sx: f64,
    cx: f64,
    sy: f64,
    cy: f64,
    s2x: f64,
    c2x: f64,
    s2y: f64,
    c2y: f64,
    st: f64,
    ct: f64,
    eps2: f64,
) -> f64 {
    let d = 1.0 + 0.5 * ct * ct * (1.0 + c2x * c2y);
    -sx * cy * st + 4.0 * eps2 * sx * cy * ct - 2.0 * sx * cy * ct / d
        + ct * ct * ct * (cx * cy * s2x * c2y - sx * sy * c2x * s2y) / (d * d)
}

/// The forced problem on `[0, 2 pi]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcedProblem {
    pub model: ModelParams,
    pub grid: GridSpec,
}

impl ForcedProblem {
    pub fn new(model: ModelParams, points: usize) -> Result<Self, SpectralError> {
        Ok(Self { model, grid: GridSpec::two_pi(points)? })
    }

    pub fn exact(&self, t: f64) -> Field {
        let ct = t.cos();
        Field::from_fn(self.grid, |x, y| x.sin() * y.cos() * ct)
    }

    pub fn exact_time_derivative(&self, t: f64) -> Field {
        let st = t.sin();
        Field::from_fn(self.grid, |x, y| -x.sin() * y.cos() * st)
    }

    pub fn forcing_field(&self, t: f64) -> Field {
        Field::from_fn(self.grid, |x, y| forcing(x, y, t, &self.model))
    }

    /// `|| u_e,t + eps^2 Delta_N^2 u_e + f_N(u_e) - g ||_N` at time `t`.
    pub fn residual(&self, t: f64) -> f64 {
        let u = self.exact(t);
        let lin = bilaplacian(&u).scaled(self.model.eps2);
        let f = nonlinear_term(&u);
        let g = self.forcing_field(t);
        let ut = self.exact_time_derivative(t);
        let mut r = ut;
        for (((r, l), f), g) in r
            .values_mut()
            .iter_mut()
            .zip(lin.values())
            .zip(f.values())
            .zip(g.values())
        {
            *r += l + f - g;
        }
        norm(&r)
    }

    /// Explicit term `f_N(u) - g(t)` for the steppers.
    pub fn term(&self) -> ForcedTerm {
        ForcedTerm::new(self.grid, self.model)
    }

    /// Integrates from `u_e(0)` to `horizon` with uniform step `tau`, returning
    /// the numerical solution.
    pub fn solve(&self, scheme: &SchemeParams, tau: f64, horizon: f64) -> Result<Field, VerificationError> {
        let sched = StepSchedule::uniform(tau, horizon)?;
        let mut runner = Runner::new(*scheme, sched, self.term()).cadence(Cadence::endpoints());
        let end = runner.run(RunState::start(&self.exact(0.0)), |_, _| {})?;
        Ok(end.stepper.u_curr())
    }
}

/// `f_N(u) - g(t)` in Fourier space.
pub struct ForcedTerm {
    grid: GridSpec,
    model: ModelParams,
    nss: NssEvaluator,
    fft: Fft2,
    trig_x: Vec<[f64; 4]>,
    g: Vec<f64>,
    g_hat: Vec<Complex64>,
}

impl ForcedTerm {
    pub fn new(grid: GridSpec, model: ModelParams) -> Self {
        let trig_x = (0..grid.points())
            .map(|i| {
                let x = grid.node(i);
                let (s, c) = x.sin_cos();
                let (s2, c2) = (2.0 * x).sin_cos();
                [s, c, s2, c2]
            })
            .collect();
        Self {
            grid,
            model,
            nss: NssEvaluator::new(grid, model.dealias),
            fft: Fft2::new(&grid),
            trig_x,
            g: vec![0.0; grid.len()],
            g_hat: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }
}

impl NonlinearTerm for ForcedTerm {
    fn eval(&mut self, u_hat: &SpectralField, t: f64, out: &mut SpectralField) {
        self.nss.nonlinear_hat(u_hat, out);
        let m = self.grid.points();
        let (st, ct) = t.sin_cos();
        for i in 0..m {
            let [sx, cx, s2x, c2x] = self.trig_x[i];
            for j in 0..m {
                let [sy, cy, s2y, c2y] = self.trig_x[j];
                self.g[i * m + j] =
                    forcing_terms(sx, cx, sy, cy, s2x, c2x, s2y, c2y, st, ct, self.model.eps2);
            }
        }
        self.fft.analyze(&self.g, &mut self.g_hat);
        for (o, g) in out.coeffs_mut().iter_mut().zip(&self.g_hat) {
            *o -= g;
        }
    }
}

/// `|| u_num - u_e(t) ||_N / || u_e(t) ||_N`.
pub fn relative_error(u_num: &Field, t: f64, prob: &ForcedProblem) -> Result<f64, VerificationError> {
    let exact = prob.exact(t);
    let denom = norm(&exact);
    if denom < 1e-14 {
        return Err(VerificationError::DegenerateNorm(denom));
    }
    Ok(norm(&u_num.lin_comb(1.0, &exact, -1.0)?) / denom)
}

/// Errors at the final time for a sequence of step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub label: String,
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    /// Observed order between consecutive step sizes.
    pub orders: Vec<f64>,
    /// Least-squares slope of `ln error` against `ln tau`.
    pub summary_order: f64,
}

impl ConvergenceReport {
    pub fn from_errors(label: impl Into<String>, taus: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = taus
            .windows(2)
            .zip(errors.windows(2))
            .map(|(t, e)| (e[0] / e[1]).ln() / (t[0] / t[1]).ln())
            .collect();
        let lt: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
        let le: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let summary_order = crate::analysis::least_squares(&lt, &le).map_or(f64::NAN, |(s, _)| s);
        Self { label: label.into(), taus, errors, orders, summary_order }
    }
}

pub fn scheme_label(p: &SchemeParams) -> String {
    match p.scheme {
        crate::Scheme::Setdms2 => format!("setdms2(A={})", p.a),
        other => format!("{other}(kappa={})", p.kappa),
    }
}

/// Runs every `(scheme, tau)` pair to `horizon` and collects relative errors.
/// Runs are independent and execute in parallel.
pub fn convergence_study(
    prob: &ForcedProblem,
    schemes: &[SchemeParams],
    taus: &[f64],
    horizon: f64,
) -> Result<Vec<ConvergenceReport>, VerificationError> {
    for w in taus.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-12 {
            return Err(VerificationError::StepSizes);
        }
    }
    StepSchedule::uniform(*taus.last().unwrap_or(&1.0), horizon)?;
    let jobs: Vec<(usize, f64)> =
        (0..schemes.len()).flat_map(|s| taus.iter().map(move |&t| (s, t))).collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(s, tau)| {
            let u = prob.solve(&schemes[s], tau, horizon)?;
            relative_error(&u, horizon, prob)
        })
        .collect::<Result<_, _>>()?;
    Ok(schemes
        .iter()
        .enumerate()
        .map(|(s, p)| {
            let e = errors[s * taus.len()..(s + 1) * taus.len()].to_vec();
            ConvergenceReport::from_errors(scheme_label(p), taus.to_vec(), e)
        })
        .collect())
}

/// `0.005 * 2^-k` for `k = 1..=levels`.
pub fn halving_taus(base: f64, levels: u32) -> Vec<f64> {
    (1..=levels).map(|k| base / f64::from(1u32 << k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn prob(m: usize) -> ForcedProblem {
        ForcedProblem::new(ModelParams::new(0.01).unwrap(), m).unwrap()
    }

    #[test]
    fn forcing_when_cos_t_vanishes() {
        let p = ModelParams::new(0.01).unwrap();
        let t = PI / 2.0;
        for &(x, y) in &[(0.3, 1.2), (2.0, -0.7), (4.4, 5.1)] {
            let g = forcing(x, y, t, &p);
            let expected = -f64::sin(x) * f64::cos(y);
            assert!((g - expected).abs() < 1e-15, "{g} vs {expected}");
        }
    }

    #[test]
    fn forcing_matches_symbolic_table() {
        // g = u_t + eps^2 Delta^2 u + div(grad u / (1 + |grad u|^2)) for
        // u = sin x cos y cos t, differentiated and evaluated symbolically at
        // eps^2 = 0.01 (20 significant digits).
        let table = [
            (0.0, 0.7, 0.3, 0.0),
            (0.4, 1.1, 0.9, -0.403_079_378_877_981_089_48),
            (2.5, -0.3, 1.7, -0.425_295_678_566_940_169_81),
            (1.0, 2.0, 0.0, 0.373_975_154_372_626_993_80),
            (3.0, 5.0, 2.2, 0.038_318_901_109_722_095_188),
            (0.0, 1.3, 1.1, 0.0),
            (5.5, 0.25, 3.9, -1.091_128_097_739_672_245_6),
        ];
        let p = ModelParams::new(0.01).unwrap();
        for (x, y, t, g) in table {
            assert!((forcing(x, y, t, &p) - g).abs() < 1e-14, "({x}, {y}, {t})");
        }
    }

    #[test]
    fn residual_is_spectrally_small() {
        assert!(prob(64).residual(0.3) <= 1e-6);
        let r: Vec<f64> = [16, 32, 64].iter().map(|&m| prob(m).residual(0.3)).collect();
        assert!(r[1] <= r[0] / 10.0 || r[1] < 1e-12, "{r:?}");
    }

    #[test]
    fn relative_error_examples() {
        let pr = prob(16);
        let t = 0.4;
        assert!(relative_error(&pr.exact(t), t, &pr).unwrap() < 1e-13);
        let scaled = pr.exact(t).scaled(1.01);
        assert!((relative_error(&scaled, t, &pr).unwrap() - 0.01).abs() < 1e-12);
        assert!(matches!(
            relative_error(&pr.exact(t), PI / 2.0, &pr),
            Err(VerificationError::DegenerateNorm(_))
        ));
    }

    #[test]
    fn report_orders_from_given_errors() {
        let r = ConvergenceReport::from_errors("x", vec![0.4, 0.2, 0.1], vec![4e-4, 1e-4, 2.5e-5]);
        for o in &r.orders {
            assert!((o - 2.0).abs() < 1e-12);
        }
        assert!((r.summary_order - 2.0).abs() < 1e-12);
    }

    #[test]
    fn taus_must_halve() {
        let pr = prob(8);
        let s = [SchemeParams::setdms2(pr.model, 0.125)];
        assert_eq!(convergence_study(&pr, &s, &[0.1, 0.04], 1.0), Err(VerificationError::StepSizes));
    }

    #[test]
    fn halving_sequence() {
        let t = halving_taus(0.005, 6);
        assert_eq!(t.len(), 6);
        assert_eq!(t[0], 0.0025);
        assert_eq!(t[5], 0.005 / 64.0);
        for tau in t {
            assert!(StepSchedule::uniform(tau, 1.0).is_ok());
        }
    }
}
