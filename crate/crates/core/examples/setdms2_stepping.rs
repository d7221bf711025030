//! Drives the stabilized multistep scheme directly with a `Stepper` and
//! watches the energy decay from random initial data.
//!
//! `cargo run --release --example setdms2_stepping -- [A]`

use nss_etd::integrators::{build_symbols, NssTerm, Stepper};
use nss_etd::io::random_field;
use nss_etd::model::diagnostics;
use nss_etd::{GridSpec, ModelParams, SchemeParams, StepperState, STABILITY_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = std::env::args().nth(1).map_or(Ok(STABILITY_THRESHOLD), |s| s.parse())?;
    let grid = GridSpec::new(12.8, 64)?;
    let model = ModelParams::new(0.005)?;
    let p = SchemeParams::setdms2(model, a);
    let tau = 0.01;

    let u0 = random_field(grid, 0.05, 7);
    let mut state = StepperState::new(&u0, 0.0);
    let mut stepper = Stepper::new(build_symbols(&grid, &p, tau)?, NssTerm::new(grid, &model));
    println!("A = {a}, tau = {tau}");
    println!("{:>8} {:>14} {:>12}", "t", "energy", "roughness");
    for n in 0..=2000 {
        if n % 200 == 0 {
            let d = diagnostics(&state.u_curr(), state.t, &model);
            println!("{:>8.2} {:>14.6} {:>12.6}", d.t, d.energy, d.roughness);
        }
        // The first call uses the one-step start; later calls use the history.
        stepper.step(&mut state)?;
    }
    Ok(())
}
