//! Energy, roughness, slope and mass of a few surfaces.
//!
//! `cargo run --release --example energy_diagnostics`

use nss_etd::io::random_field;
use nss_etd::model::diagnostics;
use nss_etd::{Field, GridSpec, ModelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::new(12.8, 128)?;
    let p = ModelParams::new(0.005)?;
    let w = 2.0 * std::f64::consts::PI / 12.8;
    let surfaces = [
        ("flat", Field::zeros(grid)),
        ("single mode", Field::from_fn(grid, |x, y| 0.5 * (w * x).sin() * (w * y).cos())),
        ("random, amplitude 0.05", random_field(grid, 0.05, 1)),
    ];
    println!("{:<24} {:>14} {:>12} {:>12} {:>12}", "surface", "energy", "roughness", "slope", "mass");
    for (name, u) in &surfaces {
        let d = diagnostics(u, 0.0, &p);
        println!("{name:<24} {:>14.6} {:>12.6} {:>12.6} {:>12.2e}", d.energy, d.roughness, d.slope, d.mass);
    }
    Ok(())
}
