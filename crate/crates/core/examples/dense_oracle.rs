//! Compares the FFT steppers with the dense matrix-function oracle on tiny
//! grids.
//!
//! `cargo run --release --example dense_oracle`

use nss_etd::io::random_field;
use nss_etd::oracle::max_deviation;
use nss_etd::{GridSpec, ModelParams, SchemeParams, STABILITY_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = ModelParams::new(0.1)?;
    for m in [4, 6, 8] {
        let grid = GridSpec::two_pi(m)?;
        let u0 = random_field(grid, 1.0, m as u64);
        for p in [
            SchemeParams::etd1(model, 0.125),
            SchemeParams::etdms2(model, 0.125),
            SchemeParams::setdms2(model, STABILITY_THRESHOLD),
        ] {
            let dev = max_deviation(&u0, &p, 0.05, 5)?;
            println!("M = {m}  {:<8} max deviation over 5 steps: {dev:.2e}", p.scheme.to_string());
        }
    }
    Ok(())
}
