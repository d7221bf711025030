//! Temporal convergence of the three schemes on the manufactured solution.
//!
//! `cargo run --release --example convergence_study -- [M]`

use nss_etd::verification::{convergence_study, halving_taus, ForcedProblem};
use nss_etd::{ModelParams, SchemeParams, STABILITY_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = std::env::args().nth(1).map_or(Ok(64), |s| s.parse())?;
    let model = ModelParams::new(0.01)?;
    let prob = ForcedProblem::new(model, m)?;
    let schemes = [
        SchemeParams::setdms2(model, 0.125),
        SchemeParams::setdms2(model, 0.01),
        SchemeParams::setdms2(model, STABILITY_THRESHOLD),
        SchemeParams::etdms2(model, 0.125),
        SchemeParams::etd1(model, 0.125),
    ];
    let taus = halving_taus(0.005, 6);
    for r in convergence_study(&prob, &schemes, &taus, 1.0)? {
        println!("{}: summary order {:.3}", r.label, r.summary_order);
        for (i, (tau, err)) in r.taus.iter().zip(&r.errors).enumerate() {
            let order = if i == 0 { String::new() } else { format!("{:.3}", r.orders[i - 1]) };
            println!("  {tau:<10.3e} {err:.4e} {order}");
        }
    }
    Ok(())
}
