//! Periodic Fourier collocation on a uniform `M x M` grid.
//!
//! Nodal values are stored row-major with the x index outermost, so the value
//! at `(x_i, y_j) = (i h, j h)` lives at `i * M + j`. Spectral coefficients use
//! the same layout in FFT index order: index `p` holds mode `p` for
//! `p <= M/2` and mode `p - M` otherwise, so the represented modes are
//! `-M/2+1 ..= M/2`.
//!
//! The forward transform carries the `1/M^2` factor, which makes the zero
//! coefficient equal to the grid mean.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid needs an even number of points per side, at least 4; got {0}")]
    InvalidPoints(usize),
    #[error("domain length must be positive and finite; got {0}")]
    InvalidLength(f64),
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("buffer holds {got} values but the grid needs {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("inverse transform left an imaginary residue of {residue:e} (limit {limit:e})")]
    NonHermitianInput { residue: f64, limit: f64 },
}

/// Periodic square domain `[0, L]^2` sampled at `M` nodes per side.
#[derive(Clone, Copy, PartialEq)]
pub struct GridSpec {
    length: f64,
    points: usize,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GridSpec([0, {}]^2, {}x{})", self.length, self.points, self.points)
    }
}

impl GridSpec {
    pub fn new(length: f64, points: usize) -> Result<Self, SpectralError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(SpectralError::InvalidLength(length));
        }
        if points < 4 || !points.is_multiple_of(2) {
            return Err(SpectralError::InvalidPoints(points));
        }
        Ok(Self { length, points })
    }

    /// `[0, 2 pi]^2` with `points` nodes per side.
    pub fn two_pi(points: usize) -> Result<Self, SpectralError> {
        Self::new(2.0 * PI, points)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of nodes, `M^2`.
    pub fn len(&self) -> usize {
        self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    /// `|Omega| = L^2`.
    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn nyquist_index(&self) -> usize {
        self.points / 2
    }

    /// Signed mode number held at FFT index `p`.
    pub fn mode(&self, p: usize) -> i64 {
        let m = self.points as i64;
        let p = p as i64;
        if p <= m / 2 {
            p
        } else {
            p - m
        }
    }

    /// FFT index holding signed mode `k` (taken modulo `M`).
    pub fn index(&self, k: i64) -> usize {
        k.rem_euclid(self.points as i64) as usize
    }

    /// Physical wavenumber `2 pi k / L` for FFT index `p`.
    pub fn wavenumber(&self, p: usize) -> f64 {
        2.0 * PI * self.mode(p) as f64 / self.length
    }

    /// Wavenumber table in FFT index order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.points).map(|p| self.wavenumber(p)).collect()
    }

    /// Symbol of the first derivative at index `p`, without the factor `i`.
    /// The Nyquist entry is zero so real fields stay real.
    pub fn first_derivative_symbol(&self, p: usize) -> f64 {
        if p == self.nyquist_index() {
            0.0
        } else {
            self.wavenumber(p)
        }
    }

    /// Symbol of the second derivative at index `p`: `-(2 pi k / L)^2`,
    /// including the Nyquist mode.
    pub fn second_derivative_symbol(&self, p: usize) -> f64 {
        let k = self.wavenumber(p);
        -k * k
    }

    /// Symbol of the discrete Laplacian for flat index `idx`.
    pub fn laplacian_symbol(&self, idx: usize) -> f64 {
        let (p, q) = (idx / self.points, idx % self.points);
        self.second_derivative_symbol(p) + self.second_derivative_symbol(q)
    }

    fn check(&self, n: usize) -> Result<(), SpectralError> {
        if n == self.len() {
            Ok(())
        } else {
            Err(SpectralError::ShapeMismatch { expected: self.len(), got: n })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Real grid function on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self, SpectralError> {
        grid.check(values.len())?;
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let m = grid.points();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..m {
            let x = grid.node(i);
            for j in 0..m {
                values.push(f(x, grid.node(j)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.points() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Self, SpectralError> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64, SpectralError> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs())))
    }

    pub(crate) fn same_grid(&self, other: &Field) -> Result<(), SpectralError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(SpectralError::GridMismatch)
        }
    }
}

/// Fourier coefficients of a grid function, full complex `M x M` storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        grid.check(coeffs.len())?;
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of mode `(k, l)`; modes are taken modulo `M`.
    pub fn coeff(&self, k: i64, l: i64) -> Complex64 {
        self.coeffs[self.flat(k, l)]
    }

    pub fn set_coeff(&mut self, k: i64, l: i64, c: Complex64) {
        let idx = self.flat(k, l);
        self.coeffs[idx] = c;
    }

    fn flat(&self, k: i64, l: i64) -> usize {
        self.grid.index(k) * self.grid.points() + self.grid.index(l)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest violation of `c(-k,-l) = conj(c(k,l))`.
    pub fn hermitian_defect(&self) -> f64 {
        let m = self.grid.points();
        let mut worst = 0.0_f64;
        for p in 0..m {
            let pn = (m - p) % m;
            for q in 0..m {
                let qn = (m - q) % m;
                let d = self.coeffs[p * m + q] - self.coeffs[pn * m + qn].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }
}

/// Planned 2D complex FFT for one grid size, with its own scratch space.
///
/// Not shared between threads; every trajectory or call owns one.
pub struct Fft2 {
    points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let m = grid.points();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len =
            forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            points: m,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    /// Unnormalized forward transform in place.
    pub fn forward_inplace(&mut self, data: &mut [Complex64]) {
        Self::pass(&*self.forward, self.points, data, &mut self.scratch);
    }

    /// Unnormalized inverse transform in place (synthesis of the interpolant).
    pub fn inverse_inplace(&mut self, data: &mut [Complex64]) {
        Self::pass(&*self.inverse, self.points, data, &mut self.scratch);
    }

    fn pass(fft: &dyn Fft<f64>, m: usize, data: &mut [Complex64], scratch: &mut [Complex64]) {
        debug_assert_eq!(data.len(), m * m);
        fft.process_with_scratch(data, scratch);
        transpose_square(data, m);
        fft.process_with_scratch(data, scratch);
        transpose_square(data, m);
    }

    /// Forward transform of real nodal values with the `1/M^2` factor.
    pub fn analyze(&mut self, values: &[f64], out: &mut [Complex64]) {
        let scale = 1.0 / (self.points * self.points) as f64;
        for (o, &v) in out.iter_mut().zip(values) {
            *o = Complex64::new(v, 0.0);
        }
        self.forward_inplace(out);
        for o in out.iter_mut() {
            *o *= scale;
        }
    }

    /// Inverse transform keeping only the real part.
    pub fn synthesize_real(&mut self, coeffs: &[Complex64], work: &mut [Complex64], out: &mut [f64]) {
        work.copy_from_slice(coeffs);
        self.inverse_inplace(work);
        for (o, w) in out.iter_mut().zip(work.iter()) {
            *o = w.re;
        }
    }
}

fn transpose_square(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

pub fn forward_transform(f: &Field) -> SpectralField {
    let grid = *f.grid();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    Fft2::new(&grid).analyze(f.values(), &mut out);
    SpectralField { grid, coeffs: out }
}

/// Nodal values of the trigonometric interpolant.
///
/// Fails with [`SpectralError::NonHermitianInput`] when the synthesized values
/// carry an imaginary part above `1e-10 * max|coeff|`.
pub fn inverse_transform(s: &SpectralField) -> Result<Field, SpectralError> {
    let grid = *s.grid();
    let mut work = s.coeffs.clone();
    Fft2::new(&grid).inverse_inplace(&mut work);
    let limit = 1e-10 * s.max_abs();
    let residue = work.iter().fold(0.0_f64, |a, c| a.max(c.im.abs()));
    if residue > limit {
        return Err(SpectralError::NonHermitianInput { residue, limit });
    }
    Ok(Field { grid, values: work.into_iter().map(|c| c.re).collect() })
}

/// Multiplies every coefficient by `symbol(p, q)` and synthesizes.
fn apply_symbol(f: &Field, symbol: impl Fn(usize, usize) -> Complex64) -> Field {
    let grid = *f.grid();
    let m = grid.points();
    let mut fft = Fft2::new(&grid);
    let mut work = vec![Complex64::new(0.0, 0.0); grid.len()];
    fft.analyze(f.values(), &mut work);
    for p in 0..m {
        for q in 0..m {
            work[p * m + q] *= symbol(p, q);
        }
    }
    fft.inverse_inplace(&mut work);
    Field { grid, values: work.into_iter().map(|c| c.re).collect() }
}

pub fn diff(f: &Field, axis: Axis, order: DerivativeOrder) -> Field {
    let grid = *f.grid();
    let sym = move |p: usize| match order {
        DerivativeOrder::First => Complex64::new(0.0, grid.first_derivative_symbol(p)),
        DerivativeOrder::Second => Complex64::new(grid.second_derivative_symbol(p), 0.0),
    };
    match axis {
        Axis::X => apply_symbol(f, |p, _| sym(p)),
        Axis::Y => apply_symbol(f, |_, q| sym(q)),
    }
}

pub fn gradient(f: &Field) -> (Field, Field) {
    (
        diff(f, Axis::X, DerivativeOrder::First),
        diff(f, Axis::Y, DerivativeOrder::First),
    )
}

pub fn divergence(fx: &Field, fy: &Field) -> Result<Field, SpectralError> {
    fx.same_grid(fy)?;
    let dx = diff(fx, Axis::X, DerivativeOrder::First);
    let dy = diff(fy, Axis::Y, DerivativeOrder::First);
    dx.lin_comb(1.0, &dy, 1.0)
}

pub fn laplacian(f: &Field) -> Field {
    let grid = *f.grid();
    apply_symbol(f, |p, q| {
        Complex64::new(grid.second_derivative_symbol(p) + grid.second_derivative_symbol(q), 0.0)
    })
}

/// `Delta_N^2` in a single spectral pass.
pub fn bilaplacian(f: &Field) -> Field {
    let grid = *f.grid();
    apply_symbol(f, |p, q| {
        let s = grid.second_derivative_symbol(p) + grid.second_derivative_symbol(q);
        Complex64::new(s * s, 0.0)
    })
}

/// Discrete inner product `h^2 sum f g`.
pub fn inner(f: &Field, g: &Field) -> Result<f64, SpectralError> {
    f.same_grid(g)?;
    let h = f.grid().spacing();
    Ok(h * h * f.values().iter().zip(g.values()).map(|(a, b)| a * b).sum::<f64>())
}

/// Inner product of two vector fields, componentwise.
pub fn inner_vec(f: (&Field, &Field), g: (&Field, &Field)) -> Result<f64, SpectralError> {
    Ok(inner(f.0, g.0)? + inner(f.1, g.1)?)
}

pub fn norm(f: &Field) -> f64 {
    let h = f.grid().spacing();
    (h * h * f.values().iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Removes the grid mean. The zero Fourier coefficient of the result is zero
/// up to the rounding of the mean subtraction itself.
pub fn project_zero_mean(f: &Field) -> Field {
    let mean = f.mean();
    let mut out = f.map(|v| v - mean);
    // A second pass absorbs the rounding left by the first.
    let residual = out.mean();
    if residual != 0.0 {
        out.values_mut().iter_mut().for_each(|v| *v -= residual);
    }
    out
}

/// Zeroes every coefficient with `|k|` or `|l|` above `M/3`.
pub fn dealias_two_thirds(s: &mut SpectralField) {
    let grid = *s.grid();
    let m = grid.points();
    let cutoff = m as i64 / 3;
    for p in 0..m {
        for q in 0..m {
            if grid.mode(p).abs() > cutoff || grid.mode(q).abs() > cutoff {
                s.coeffs[p * m + q] = Complex64::new(0.0, 0.0);
            }
        }
    }
}
