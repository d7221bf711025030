//! Physics of the no-slope-selection equation
//! `u_t = -eps^2 Delta^2 u - div( grad u / (1 + |grad u|^2) )`:
//! the flux `beta`, the nonlinear term `f_N`, the discrete energy and the
//! coarsening diagnostics.

use num_complex::Complex64;

use crate::spectral::{
    dealias_two_thirds, forward_transform, gradient, Fft2, Field, GridSpec, SpectralError,
    SpectralField,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Surface diffusion coefficient `eps^2`.
    pub eps2: f64,
    /// Apply 2/3-rule truncation around the nonlinear term. Off by default.
    pub dealias: bool,
}

impl ModelParams {
    pub fn new(eps2: f64) -> Result<Self, ModelError> {
        if !(eps2.is_finite() && eps2 > 0.0) {
            return Err(ModelError::InvalidEps2(eps2));
        }
        Ok(Self { eps2, dealias: false })
    }

    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("eps^2 must be positive and finite; got {0}")]
    InvalidEps2(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// One diagnostics record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub energy: f64,
    pub roughness: f64,
    pub slope: f64,
    pub mass: f64,
}

/// Pointwise `v / (1 + |v|^2)`.
pub fn beta(vx: &Field, vy: &Field) -> Result<(Field, Field), SpectralError> {
    vx.same_grid(vy)?;
    let mut bx = vx.clone();
    let mut by = vy.clone();
    for ((a, b), (&x, &y)) in bx
        .values_mut()
        .iter_mut()
        .zip(by.values_mut().iter_mut())
        .zip(vx.values().iter().zip(vy.values()))
    {
        let d = 1.0 + x * x + y * y;
        *a = x / d;
        *b = y / d;
    }
    Ok((bx, by))
}

/// `f_N(u) = div_N beta(grad_N u)` with its zero mode set to exactly 0.
pub fn nonlinear_term(u: &Field) -> Field {
    nonlinear_term_with(u, &ModelParams { eps2: 1.0, dealias: false })
}

pub fn nonlinear_term_with(u: &Field, p: &ModelParams) -> Field {
    let grid = *u.grid();
    let mut ev = NssEvaluator::new(grid, p.dealias);
    let u_hat = forward_transform(u);
    let mut f_hat = SpectralField::zeros(grid);
    ev.nonlinear_hat(&u_hat, &mut f_hat);
    let mut out = Field::zeros(grid);
    ev.to_physical(&f_hat, out.values_mut());
    out
}

/// Discrete energy `(-1/2 ln(1 + |grad_N u|^2), 1)_N + eps^2/2 ||Delta_N u||_N^2`.
pub fn energy(u: &Field, p: &ModelParams) -> f64 {
    let grid = *u.grid();
    let mut ev = NssEvaluator::new(grid, false);
    let u_hat = forward_transform(u);
    ev.diagnostics(&u_hat, 0.0, p.eps2).energy
}

/// RMS deviation from the grid mean.
pub fn roughness(u: &Field) -> f64 {
    let mean = u.mean();
    let n = u.values().len() as f64;
    (u.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// RMS of `|grad_N u|`.
pub fn slope(u: &Field) -> f64 {
    let (gx, gy) = gradient(u);
    let n = u.values().len() as f64;
    let s: f64 = gx.values().iter().zip(gy.values()).map(|(a, b)| a * a + b * b).sum();
    (s / n).sqrt()
}

pub fn mass(u: &Field) -> f64 {
    u.mean()
}

pub fn diagnostics(u: &Field, t: f64, p: &ModelParams) -> Diagnostics {
    let mut ev = NssEvaluator::new(*u.grid(), false);
    ev.diagnostics(&forward_transform(u), t, p.eps2)
}

/// Reusable FFT workspace for evaluating `f_N` and diagnostics from Fourier
/// coefficients. Two real fields are packed into one complex transform as
/// real and imaginary parts.
pub struct NssEvaluator {
    grid: GridSpec,
    fft: Fft2,
    kx: Vec<f64>,
    lap: Vec<f64>,
    dealias: bool,
    work: Vec<Complex64>,
    trunc: SpectralField,
}

impl NssEvaluator {
    pub fn new(grid: GridSpec, dealias: bool) -> Self {
        let m = grid.points();
        let kx = (0..m).map(|p| grid.first_derivative_symbol(p)).collect();
        let lap = (0..grid.len()).map(|i| grid.laplacian_symbol(i)).collect();
        Self {
            grid,
            fft: Fft2::new(&grid),
            kx,
            lap,
            dealias,
            work: vec![Complex64::new(0.0, 0.0); grid.len()],
            trunc: SpectralField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Writes `grad_N u` as `gx + i gy` into `self.work`.
    fn packed_gradient(&mut self, u_hat: &[Complex64]) {
        let m = self.grid.points();
        for p in 0..m {
            let kx = self.kx[p];
            for q in 0..m {
                let ky = self.kx[q];
                let c = u_hat[p * m + q];
                // i kx c + i (i ky c)
                self.work[p * m + q] = Complex64::new(-kx * c.im - ky * c.re, kx * c.re - ky * c.im);
            }
        }
        self.fft.inverse_inplace(&mut self.work);
    }

    /// Spectral coefficients of `f_N(u)` given those of `u`.
    pub fn nonlinear_hat(&mut self, u_hat: &SpectralField, out: &mut SpectralField) {
        let m = self.grid.points();
        let n = self.grid.len();
        if self.dealias {
            self.trunc.coeffs_mut().copy_from_slice(u_hat.coeffs());
            dealias_two_thirds(&mut self.trunc);
            let t = std::mem::replace(&mut self.trunc, SpectralField::zeros(self.grid));
            self.packed_gradient(t.coeffs());
            self.trunc = t;
        } else {
            self.packed_gradient(u_hat.coeffs());
        }
        for w in self.work.iter_mut() {
            let (x, y) = (w.re, w.im);
            let d = 1.0 + x * x + y * y;
            *w = Complex64::new(x / d, y / d);
        }
        self.fft.forward_inplace(&mut self.work);
        let scale = 1.0 / n as f64;
        let dst = out.coeffs_mut();
        for p in 0..m {
            let pn = (m - p) % m;
            let kx = self.kx[p];
            for q in 0..m {
                let qn = (m - q) % m;
                let z = self.work[p * m + q];
                let zc = self.work[pn * m + qn].conj();
                let bx = (z + zc) * 0.5;
                let by = (z - zc) * Complex64::new(0.0, -0.5);
                let ky = self.kx[q];
                let s = bx * kx + by * ky;
                dst[p * m + q] = Complex64::new(-s.im, s.re) * scale;
            }
        }
        dst[0] = Complex64::new(0.0, 0.0);
        if self.dealias {
            dealias_two_thirds(out);
        }
    }

    /// Real part of the inverse transform.
    pub fn to_physical(&mut self, s: &SpectralField, out: &mut [f64]) {
        self.work.copy_from_slice(s.coeffs());
        self.fft.inverse_inplace(&mut self.work);
        for (o, w) in out.iter_mut().zip(&self.work) {
            *o = w.re;
        }
    }

    pub fn field(&mut self, s: &SpectralField) -> Field {
        let mut f = Field::zeros(self.grid);
        self.to_physical(s, f.values_mut());
        f
    }

    pub fn diagnostics(&mut self, u_hat: &SpectralField, t: f64, eps2: f64) -> Diagnostics {
        let n = self.grid.len() as f64;
        let h2 = self.grid.spacing().powi(2);
        let c = u_hat.coeffs();

        self.packed_gradient(c);
        let mut log_sum = 0.0;
        let mut grad_sq = 0.0;
        for w in &self.work {
            let g2 = w.re * w.re + w.im * w.im;
            log_sum += g2.ln_1p();
            grad_sq += g2;
        }

        // u + i Delta_N u
        for (i, w) in self.work.iter_mut().enumerate() {
            let l = self.lap[i];
            *w = c[i] + Complex64::new(-l * c[i].im, l * c[i].re);
        }
        self.fft.inverse_inplace(&mut self.work);
        let mut sum_u = 0.0;
        let mut lap_sq = 0.0;
        for w in &self.work {
            sum_u += w.re;
            lap_sq += w.im * w.im;
        }
        let mean = sum_u / n;
        let rough_sq = self.work.iter().map(|w| (w.re - mean) * (w.re - mean)).sum::<f64>() / n;

        Diagnostics {
            t,
            energy: -0.5 * h2 * log_sum + 0.5 * eps2 * h2 * lap_sq,
            roughness: rough_sq.sqrt(),
            slope: (grad_sq / n).sqrt(),
            mass: mean,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{divergence, inner, laplacian, norm};
    use std::f64::consts::PI;

    fn params() -> ModelParams {
        ModelParams::new(0.01).unwrap()
    }

    #[test]
    fn beta_examples() {
        let g = GridSpec::two_pi(4).unwrap();
        let z = Field::zeros(g);
        let (bx, by) = beta(&z, &z).unwrap();
        assert_eq!(bx.max_abs() + by.max_abs(), 0.0);

        let (bx, by) = beta(&Field::constant(g, 1.0), &z).unwrap();
        assert_eq!((bx.get(1, 2), by.get(1, 2)), (0.5, 0.0));

        let (bx, by) = beta(&Field::constant(g, 3.0), &Field::constant(g, 4.0)).unwrap();
        assert!((bx.get(0, 0) - 3.0 / 26.0).abs() < 1e-16);
        assert!((by.get(0, 0) - 4.0 / 26.0).abs() < 1e-16);
    }

    #[test]
    fn nonlinear_term_examples() {
        let g = GridSpec::two_pi(16).unwrap();
        assert_eq!(nonlinear_term(&Field::zeros(g)).max_abs(), 0.0);
        assert!(nonlinear_term(&Field::constant(g, 4.0)).max_abs() < 1e-15);

        let g = GridSpec::two_pi(64).unwrap();
        let f = nonlinear_term(&Field::from_fn(g, |x, _| x.sin()));
        // x = pi/2 is node 16.
        assert!((f.get(16, 5) + 1.0).abs() < 1e-8, "{}", f.get(16, 5));
        assert!(f.mean().abs() < 1e-15, "{}", f.mean());
    }

    #[test]
    fn nonlinear_term_matches_operator_composition() {
        let g = GridSpec::new(3.0, 16).unwrap();
        let u = Field::from_fn(g, |x, y| (2.0 * PI * x / 3.0).sin() * (4.0 * PI * y / 3.0).cos() + 0.3 * (2.0 * PI * (x + y) / 3.0).cos());
        let (gx, gy) = gradient(&u);
        let (bx, by) = beta(&gx, &gy).unwrap();
        let reference = divergence(&bx, &by).unwrap();
        let fast = nonlinear_term(&u);
        assert!(fast.max_abs_diff(&reference).unwrap() < 1e-13);
    }

    #[test]
    fn energy_examples() {
        let g = GridSpec::two_pi(32).unwrap();
        let p = params();
        assert_eq!(energy(&Field::zeros(g), &p), 0.0);

        let u = Field::from_fn(g, |x, y| x.sin() * y.cos());
        let surface = 0.5 * p.eps2 * norm(&laplacian(&u)).powi(2);
        assert!((surface - 2.0 * p.eps2 * PI * PI).abs() < 1e-10);
        assert!((surface - 0.197392).abs() < 1e-6);

        let shifted = u.map(|v| v + 3.7);
        assert!((energy(&shifted, &p) - energy(&u, &p)).abs() < 1e-12);
    }

    #[test]
    fn energy_matches_fine_quadrature() {
        // 2048^2-point trapezoid of ln(1 + cos^2 x cos^2 y + sin^2 x sin^2 y)
        // over [0, 2 pi]^2 is 15.440732731753013, so
        // E = 2 eps^2 pi^2 - 15.440732731753013 / 2 at eps^2 = 0.01.
        let reference = -7.522974277854719;
        let g = GridSpec::two_pi(64).unwrap();
        let u = Field::from_fn(g, |x, y| x.sin() * y.cos());
        assert!((energy(&u, &params()) - reference).abs() < 1e-10);
    }

    #[test]
    fn diagnostics_examples() {
        let g = GridSpec::two_pi(8).unwrap();
        let c = Field::constant(g, 7.0);
        assert_eq!(roughness(&c), 0.0);
        assert!(slope(&c) < 1e-14);
        assert_eq!(mass(&c), 7.0);

        for m in [4, 8, 16] {
            let g = GridSpec::two_pi(m).unwrap();
            let s = Field::from_fn(g, |x, _| x.sin());
            assert!((roughness(&s) - 0.5_f64.sqrt()).abs() < 1e-12);
            assert!((slope(&s) - 0.5_f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluator_diagnostics_agree_with_free_functions() {
        let g = GridSpec::new(5.0, 16).unwrap();
        let u = Field::from_fn(g, |x, y| 0.2 + (1.3 * x).sin() * (2.0 * PI * y / 5.0).cos() + 0.1 * x.cos());
        let p = params();
        let d = diagnostics(&u, 1.5, &p);
        assert_eq!(d.t, 1.5);
        assert!((d.roughness - roughness(&u)).abs() < 1e-13);
        assert!((d.slope - slope(&u)).abs() < 1e-13);
        assert!((d.mass - mass(&u)).abs() < 1e-14);
        let (gx, gy) = gradient(&u);
        let logs = Field::from_values(
            g,
            gx.values().iter().zip(gy.values()).map(|(a, b)| -0.5 * (a * a + b * b).ln_1p()).collect(),
        )
        .unwrap();
        let e = inner(&logs, &Field::constant(g, 1.0)).unwrap()
            + 0.5 * p.eps2 * norm(&laplacian(&u)).powi(2);
        assert!((d.energy - e).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_eps2() {
        assert!(ModelParams::new(0.0).is_err());
        assert!(ModelParams::new(f64::NAN).is_err());
    }
}
