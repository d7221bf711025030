//! Log and power-law fits of a diagnostics CSV over a time window.
//!
//! `cargo run --release --example scaling_fit -- coarsening.csv [lo] [hi]`

use std::path::PathBuf;

use nss_etd::analysis::{fit_log, fit_power, read_series, FitWindow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().ok_or("usage: scaling_fit <csv> [lo] [hi]")?);
    let lo: f64 = args.next().map_or(Ok(1.0), |s| s.parse())?;
    let hi: f64 = args.next().map_or(Ok(1000.0), |s| s.parse())?;
    let window = FitWindow::new(lo, hi);

    let e = fit_log(&read_series(&path, "energy")?, window)?;
    println!("energy    ~ {:.4} ln t + {:.4}   ({} samples, rms {:.2e})", e.a, e.b, e.samples, e.rms_residual);
    for q in ["roughness", "slope"] {
        let f = fit_power(&read_series(&path, q)?, window)?;
        println!("{q:<9} ~ {:.4} t^{:.4}   ({} samples, rms {:.2e})", f.a, f.b, f.samples, f.rms_residual);
    }
    Ok(())
}
