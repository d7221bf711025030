//! Fourier pseudo-spectral solvers for the no-slope-selection thin-film
//! epitaxy equation
//!
//! ```text
//! u_t = -eps^2 Delta^2 u - div( grad u / (1 + |grad u|^2) )
//! ```
//!
//! on a periodic square, integrated in time with exponential time
//! differencing: the stabilized second-order multistep scheme (`Setdms2`)
//! and the convex-splitting baselines `Etd1` / `Etdms2`.
//!
//! - [`spectral`]: grids, transforms, differentiation, discrete inner products
//! - [`model`]: the nonlinear flux, discrete energy, roughness and slope
//! - [`integrators`]: phi-functions, symbol tables, steppers, schedules
//! - [`verification`]: manufactured solution and temporal convergence studies
//! - [`analysis`]: scaling-law fits and CSV output
//! - [`oracle`]: dense matrix-function reference stepper for small grids
//! - [`io`]: run configuration, initial data, snapshots and checkpoints
//! - [`app`]: the `run`, `converge`, `fit` and `oracle` commands

pub mod analysis;
pub mod app;
pub mod integrators;
pub mod io;
pub mod model;
pub mod oracle;
pub mod spectral;
pub mod verification;

pub use integrators::{Scheme, SchemeParams, StepSchedule, StepperState, STABILITY_THRESHOLD};
pub use model::{Diagnostics, ModelParams};
pub use spectral::{Field, GridSpec, SpectralField};
