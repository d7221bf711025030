//! Spectral differentiation against closed-form derivatives, and the
//! discrete summation-by-parts identity.
//!
//! `cargo run --release --example spectral_derivatives`

use nss_etd::spectral::{diff, gradient, inner, inner_vec, laplacian, Axis, DerivativeOrder};
use nss_etd::{Field, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::two_pi(32)?;
    let u = Field::from_fn(grid, |x, y| (3.0 * x).sin() * (2.0 * y).cos());
    let ux = Field::from_fn(grid, |x, y| 3.0 * (3.0 * x).cos() * (2.0 * y).cos());
    let lap = u.scaled(-13.0);

    let dx = diff(&u, Axis::X, DerivativeOrder::First);
    println!("max |D_x u - u_x|     = {:.3e}", dx.max_abs_diff(&ux)?);
    println!("max |Lap u - (-13 u)| = {:.3e}", laplacian(&u).max_abs_diff(&lap)?);

    let v = Field::from_fn(grid, |x, y| (x + 2.0 * y).cos() + 0.7 * (3.0 * x).sin() * (2.0 * y).cos());
    let (ux, uy) = gradient(&u);
    let (vx, vy) = gradient(&v);
    let lhs = inner(&u, &laplacian(&v))?;
    let rhs = -inner_vec((&ux, &uy), (&vx, &vy))?;
    println!("(u, Lap v)         = {lhs:.15e}");
    println!("-(grad u, grad v) = {rhs:.15e}");
    Ok(())
}
