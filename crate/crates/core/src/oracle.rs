//! Dense reference stepper for small grids.
//!
//! Everything is assembled in physical space: the Fourier differentiation
//! matrices are summed mode by mode into `M x M` real matrices, lifted to the
//! grid with Kronecker products, and the matrix functions `e^{-tau K}`,
//! `phi0(K)` and `phi1(K)` come from one exponential of the augmented matrix
//!
//! ```text
//!     | -tau K   tau I   0 |
//! W = |   0        0     I |
//!     |   0        0     0 |
//! ```
//!
//! whose first block row is `[e^{-tau K}, phi0(K), phi1(K)]`. No FFT, symbol
//! table or scalar phi-function is involved, so it checks the spectral
//! steppers along an independent route. Cost grows like `M^6`; keep `M <= 8`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::integrators::{build_symbols, IntegratorError, NssTerm, Scheme, SchemeParams, Stepper, StepperState};
use crate::spectral::{Field, GridSpec};

pub struct DenseOracle {
    grid: GridSpec,
    dx: DMatrix<f64>,
    dy: DMatrix<f64>,
    lap: DMatrix<f64>,
    stab: DMatrix<f64>,
    exp_k: DMatrix<f64>,
    phi0: DMatrix<f64>,
    phi1: DMatrix<f64>,
    kappa_explicit: f64,
    multistep: bool,
}

/// 1D first-derivative matrix with the Nyquist mode dropped.
fn first_derivative(grid: &GridSpec) -> DMatrix<f64> {
    let m = grid.points();
    let w = 2.0 * PI / grid.length();
    DMatrix::from_fn(m, m, |i, j| {
        let d = i as f64 - j as f64;
        (1..m / 2)
            .map(|k| {
                let k = k as f64;
                -2.0 * w * k * (2.0 * PI * k * d / m as f64).sin()
            })
            .sum::<f64>()
            / m as f64
    })
}

/// 1D second-derivative matrix including the Nyquist mode.
fn second_derivative(grid: &GridSpec) -> DMatrix<f64> {
    let m = grid.points();
    let w = 2.0 * PI / grid.length();
    let nyq = w * (m / 2) as f64;
    DMatrix::from_fn(m, m, |i, j| {
        let d = i as f64 - j as f64;
        let pairs: f64 = (1..m / 2)
            .map(|k| {
                let k = k as f64;
                -2.0 * (w * k).powi(2) * (2.0 * PI * k * d / m as f64).cos()
            })
            .sum();
        (pairs - nyq * nyq * (PI * d).cos()) / m as f64
    })
}

impl DenseOracle {
    pub fn new(grid: GridSpec, p: &SchemeParams, tau: f64) -> Self {
        let m = grid.points();
        let n = grid.len();
        let id_m = DMatrix::<f64>::identity(m, m);
        let id = DMatrix::<f64>::identity(n, n);
        let d1 = first_derivative(&grid);
        let d2 = second_derivative(&grid);
        let dx = d1.kronecker(&id_m);
        let dy = id_m.kronecker(&d1);
        let lap = d2.kronecker(&id_m) + id_m.kronecker(&d2);
        let bilap = &lap * &lap;
        let eps2 = p.model.eps2;

        let (k, stab, kappa_explicit) = match p.scheme {
            Scheme::Setdms2 => {
                let stab = (&id + &bilap * (p.a * tau * tau))
                    .try_inverse()
                    .expect("I + A tau^2 Delta^2 is positive definite");
                ((&stab * &bilap) * eps2, stab, 0.0)
            }
            Scheme::Etd1 | Scheme::Etdms2 => (&bilap * eps2 - &lap * p.kappa, id.clone(), p.kappa),
        };

        let mut w = DMatrix::<f64>::zeros(3 * n, 3 * n);
        w.view_mut((0, 0), (n, n)).copy_from(&(&k * -tau));
        w.view_mut((0, n), (n, n)).copy_from(&(&id * tau));
        w.view_mut((n, 2 * n), (n, n)).copy_from(&id);
        let ew = w.exp();

        Self {
            grid,
            dx,
            dy,
            lap,
            stab,
            exp_k: ew.view((0, 0), (n, n)).into_owned(),
            phi0: ew.view((0, n), (n, n)).into_owned(),
            phi1: ew.view((0, 2 * n), (n, n)).into_owned(),
            kappa_explicit,
            multistep: p.scheme != Scheme::Etd1,
        }
    }

    /// Explicit term after the stabilizing prefactor: `S (f_N(u) + kappa Delta u)`.
    fn explicit(&self, u: &DVector<f64>) -> DVector<f64> {
        let gx = &self.dx * u;
        let gy = &self.dy * u;
        let mut bx = gx.clone();
        let mut by = gy.clone();
        for i in 0..u.len() {
            let d = 1.0 + gx[i] * gx[i] + gy[i] * gy[i];
            bx[i] = gx[i] / d;
            by[i] = gy[i] / d;
        }
        let f = &self.dx * bx + &self.dy * by + (&self.lap * u) * self.kappa_explicit;
        &self.stab * f
    }

    /// `steps` consecutive steps from `u0` (one-step start, then multistep
    /// unless the scheme is ETD1). Returns `u^1 ..= u^steps`.
    pub fn trajectory(&self, u0: &Field, steps: usize) -> Vec<Field> {
        let mut u = DVector::from_column_slice(u0.values());
        let mut g_prev: Option<DVector<f64>> = None;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let g = self.explicit(&u);
            let mut next = &self.exp_k * &u - &self.phi0 * &g;
            if let (true, Some(prev)) = (self.multistep, g_prev.as_ref()) {
                next -= &self.phi1 * (&g - prev);
            }
            g_prev = Some(g);
            u = next;
            out.push(Field::from_values(self.grid, u.as_slice().to_vec()).expect("grid size"));
        }
        out
    }
}

/// Largest max-norm gap between the spectral stepper and the dense oracle
/// over `steps` steps from `u0`.
pub fn max_deviation(u0: &Field, p: &SchemeParams, tau: f64, steps: usize) -> Result<f64, IntegratorError> {
    let grid = *u0.grid();
    let reference = DenseOracle::new(grid, p, tau).trajectory(u0, steps);
    let mut stepper = Stepper::new(build_symbols(&grid, p, tau)?, NssTerm::new(grid, &p.model));
    let mut state = StepperState::new(u0, 0.0);
    let mut worst = 0.0_f64;
    for r in &reference {
        stepper.step(&mut state)?;
        let gap = state.u_curr().max_abs_diff(r).map_err(|_| IntegratorError::GridMismatch)?;
        worst = worst.max(gap);
    }
    Ok(worst)
}
