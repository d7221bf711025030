//! Coarsening from random data on the piecewise-uniform schedule, writing
//! diagnostics to a CSV file.
//!
//! `cargo run --release --example coarsening_run -- [T] [M] [out.csv]`
//!
//! The defaults (T = 20, M = 64) finish in well under a minute. The
//! `presets/coarsening-1000.conf` run via the CLI is the full-size version.

use std::fs::File;
use std::io::BufWriter;

use nss_etd::analysis::DiagnosticsWriter;
use nss_etd::integrators::{run, Cadence};
use nss_etd::io::random_field;
use nss_etd::{GridSpec, ModelParams, SchemeParams, StepSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let horizon: f64 = args.next().map_or(Ok(20.0), |s| s.parse())?;
    let m: usize = args.next().map_or(Ok(64), |s| s.parse())?;
    let out = args.next().unwrap_or_else(|| "coarsening.csv".into());

    let grid = GridSpec::new(12.8, m)?;
    let p = SchemeParams::setdms2(ModelParams::new(0.005)?, 0.125);
    let sched = StepSchedule::coarsening(horizon)?;
    let u0 = random_field(grid, 0.05, 1);

    let mut writer = DiagnosticsWriter::new(BufWriter::new(File::create(&out)?), true)?;
    let mut failure = None;
    let mut last = None;
    let end = run(&u0, &p, &sched, Cadence::default(), |_, d| {
        if failure.is_none() {
            failure = writer.write(d).err();
        }
        last = Some(*d);
    })?;
    writer.flush()?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    println!("{} steps to t = {}; diagnostics in {out}", end.step_index, end.t);
    if let Some(d) = last {
        println!("final energy {:.4}, roughness {:.4}, slope {:.4}", d.energy, d.roughness, d.slope);
    }
    Ok(())
}
