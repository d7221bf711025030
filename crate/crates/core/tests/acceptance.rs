//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails. Pass criterion numbers (e.g. `-- 1 4`) to run a
//! subset.

mod common;

use std::time::Instant;

use rayon::prelude::*;

use common::{all_schemes, band_limited, PHI_TABLE};
use nss_etd::analysis::{emit_csv, fit_log, fit_power, parse_diagnostics_csv, FitWindow, TimeSeries};
use nss_etd::integrators::{build_symbols, phi0_scalar, phi1_scalar, run, Cadence, LinearOnly, Stepper};
use nss_etd::io::{random_field, Header, Snapshot};
use nss_etd::model::beta;
use nss_etd::oracle::max_deviation;
use nss_etd::spectral::{forward_transform, gradient, inner, inner_vec, inverse_transform, laplacian, norm};
use nss_etd::verification::{convergence_study, halving_taus, ForcedProblem};
use nss_etd::{
    Diagnostics, GridSpec, ModelParams, SchemeParams, SpectralField, StepSchedule, StepperState, STABILITY_THRESHOLD,
};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `|x - y|` relative to the smaller magnitude.
fn rel_gap(x: f64, y: f64) -> f64 {
    (x - y).abs() / x.abs().min(y.abs())
}

fn temporal_order() -> Outcome {
    let model = ModelParams::new(0.01).map_err(|e| e.to_string())?;
    let prob = ForcedProblem::new(model, 128).map_err(|e| e.to_string())?;
    let schemes = [
        SchemeParams::setdms2(model, 0.125),
        SchemeParams::setdms2(model, 0.01),
        SchemeParams::setdms2(model, STABILITY_THRESHOLD),
        SchemeParams::etdms2(model, 0.125),
    ];
    let taus = halving_taus(0.005, 6);
    let reports = convergence_study(&prob, &schemes, &taus, 1.0).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &reports {
        ok &= (1.8..=2.2).contains(&r.summary_order);
        parts.push(format!("{} order {:.3}", r.label, r.summary_order));
    }
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            for k in 0..taus.len() {
                worst = worst.max(rel_gap(reports[i].errors[k], reports[j].errors[k]));
            }
        }
    }
    ok &= worst <= 0.2;
    parts.push(format!("max pairwise sETDMs2 error gap {:.1}%", 100.0 * worst));
    check(ok, parts.join(", "))
}

fn energy_bound() -> Outcome {
    let grid = GridSpec::new(12.8, 64).map_err(|e| e.to_string())?;
    let model = ModelParams::new(0.005).map_err(|e| e.to_string())?;
    let p = SchemeParams::setdms2(model, STABILITY_THRESHOLD);
    let sched = StepSchedule::uniform(0.004, 100.0).map_err(|e| e.to_string())?;
    let results: Vec<Result<(f64, f64, usize), String>> = [1u64, 2, 3]
        .par_iter()
        .map(|&seed| {
            let u0 = random_field(grid, 0.05, seed);
            let mut energies = Vec::new();
            run(&u0, &p, &sched, Cadence::every_step(), |_, d| energies.push(d.energy)).map_err(|e| e.to_string())?;
            let e0 = energies[0];
            let above = energies.iter().map(|&e| e - e0).fold(f64::NEG_INFINITY, f64::max);
            let rise = energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max) / e0.abs();
            Ok((above, rise, energies.len()))
        })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (seed, r) in results.into_iter().enumerate() {
        let (above, rise, n) = r?;
        ok &= above <= 1e-8 && rise <= 1e-8 && n == 25_001;
        parts.push(format!("seed {}: max E-E0 {above:.2e}, max step rise/|E0| {rise:.2e}, {n} samples", seed + 1));
    }
    check(ok, parts.join("; "))
}

fn scaling_laws() -> Outcome {
    let grid = GridSpec::new(12.8, 128).map_err(|e| e.to_string())?;
    let model = ModelParams::new(0.005).map_err(|e| e.to_string())?;
    let sched = StepSchedule::coarsening(1000.0).map_err(|e| e.to_string())?;
    let u0 = random_field(grid, 0.05, 2024);
    let window = FitWindow::new(1.0, 1000.0);
    let a_values = [0.125, 0.01, STABILITY_THRESHOLD];
    let fits: Vec<Result<[f64; 4], String>> = a_values
        .par_iter()
        .map(|&a| {
            let start = Instant::now();
            let mut rows: Vec<Diagnostics> = Vec::new();
            let p = SchemeParams::setdms2(model, a);
            run(&u0, &p, &sched, Cadence::default(), |_, d| rows.push(*d)).map_err(|e| e.to_string())?;
            let series = |q| TimeSeries::from_diagnostics(&rows, q).map_err(|e| e.to_string());
            let e = fit_log(&series("energy")?, window).map_err(|e| e.to_string())?;
            let r = fit_power(&series("roughness")?, window).map_err(|e| e.to_string())?;
            let s = fit_power(&series("slope")?, window).map_err(|e| e.to_string())?;
            println!("  A = {a}: {:.0} s, {} samples", start.elapsed().as_secs_f64(), rows.len());
            Ok([e.a, e.b, r.b, s.b])
        })
        .collect();
    let fits: Vec<[f64; 4]> = fits.into_iter().collect::<Result<_, _>>()?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, f) in a_values.iter().zip(&fits) {
        let [ea, eb, rb, sb] = *f;
        ok &= (ea - -39.4).abs() <= 0.15 * 39.4;
        ok &= (0.43..=0.55).contains(&rb);
        ok &= (0.21..=0.32).contains(&sb);
        parts.push(format!("A={a:.4}: energy a {ea:.2} b {eb:.2}, roughness b {rb:.4}, slope b {sb:.4}"));
    }
    for (k, name) in [(1, "energy b"), (2, "roughness b"), (3, "slope b")] {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                worst = worst.max(rel_gap(fits[i][k], fits[j][k]));
            }
        }
        ok &= worst <= 0.03;
        parts.push(format!("{name} spread {:.2}%", 100.0 * worst));
    }
    check(ok, parts.join("; "))
}

fn dense_oracle() -> Outcome {
    let model = ModelParams::new(0.05).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for m in [4, 6, 8] {
        let grid = GridSpec::new(2.0 * std::f64::consts::PI, m).map_err(|e| e.to_string())?;
        for seed in 0..20 {
            let u0 = random_field(grid, 1.0, seed);
            for p in all_schemes(model) {
                worst = worst.max(max_deviation(&u0, &p, 0.05, 5).map_err(|e| e.to_string())?);
            }
        }
    }
    check(worst <= 1e-10, format!("max deviation {worst:.2e} over M in {{4,6,8}}, 20 seeds, 3 schemes"))
}

fn invariants() -> Outcome {
    let mut failures = Vec::new();
    let mut fail = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let grid = GridSpec::new(3.7, 16).map_err(|e| e.to_string())?;
    let model = ModelParams::new(0.005).map_err(|e| e.to_string())?;

    for seed in 0..16 {
        let f = band_limited(&random_field(grid, 1.0, seed));
        let h = band_limited(&random_field(grid, 1.0, seed + 100));
        let scale = norm(&f) * norm(&h) * 100.0;
        let (fx, fy) = gradient(&f);
        let (hx, hy) = gradient(&h);
        let sbp = inner(&f, &laplacian(&h)).unwrap() + inner_vec((&fx, &fy), (&hx, &hy)).unwrap();
        fail("summation by parts", sbp.abs() <= 1e-10 * scale);

        let s = forward_transform(&f);
        let lhs = inner(&f, &f).unwrap();
        let rhs = grid.area() * s.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>();
        fail("parseval", (lhs - rhs).abs() <= 1e-10 * lhs);

        let (vx, vy) = (f.scaled(20.0), h.scaled(20.0));
        let (wx, wy) = (h.scaled(-3.0), f.scaled(7.0));
        let (bvx, bvy) = beta(&vx, &vy).unwrap();
        let (bwx, bwy) = beta(&wx, &wy).unwrap();
        for i in 0..grid.len() {
            fail("beta half bound", bvx.values()[i].hypot(bvy.values()[i]) <= 0.5 + 1e-15);
            let db = (bvx.values()[i] - bwx.values()[i]).hypot(bvy.values()[i] - bwy.values()[i]);
            let dv = (vx.values()[i] - wx.values()[i]).hypot(vy.values()[i] - wy.values()[i]);
            fail("beta contraction", db <= dv + 1e-14);
        }
    }

    let g16 = GridSpec::new(12.8, 16).map_err(|e| e.to_string())?;
    let u0 = random_field(g16, 0.3, 11).map(|v| v + 0.25);
    let m0 = u0.mean();
    let sched = StepSchedule::uniform(0.01, 100.0).map_err(|e| e.to_string())?;
    for p in all_schemes(model) {
        let end = run(&u0, &p, &sched, Cadence::endpoints(), |_, _| {}).map_err(|e| e.to_string())?;
        fail("mass conservation", end.step_index == 10_000 && (end.u_curr().mean() - m0).abs() <= 1e-12);
        let again = run(&u0, &p, &sched, Cadence::endpoints(), |_, _| {}).map_err(|e| e.to_string())?;
        fail("determinism", again.u_hat == end.u_hat);
    }

    for (z, p0, p1) in PHI_TABLE {
        let x = z / 0.1;
        let a = phi0_scalar(x, 0.1).map_err(|e| e.to_string())?;
        let b = phi1_scalar(x, 0.1).map_err(|e| e.to_string())?;
        fail("phi accuracy", ((a - p0) / p0).abs() <= 1e-12 && ((b - p1) / p1).abs() <= 1e-12);
    }

    let tau = 0.013;
    for p in [
        SchemeParams::etd1(model, 0.0),
        SchemeParams::etdms2(model, 0.0),
        SchemeParams::setdms2(model, STABILITY_THRESHOLD),
    ] {
        let mut s = SpectralField::zeros(g16);
        s.set_coeff(2, 3, num_complex::Complex64::new(0.3, -0.2));
        s.set_coeff(-2, -3, num_complex::Complex64::new(0.3, 0.2));
        let u = inverse_transform(&s).map_err(|e| e.to_string())?;
        let st = build_symbols(&g16, &p, tau).map_err(|e| e.to_string())?;
        let decay = (-40.0 * tau * st.k()[st.flat(2, 3)]).exp();
        let mut state = StepperState::new(&u, 0.0);
        let a0 = state.u_hat.coeff(2, 3);
        let mut stepper = Stepper::new(st, LinearOnly);
        for _ in 0..40 {
            stepper.step(&mut state).map_err(|e| e.to_string())?;
        }
        fail("linear flow exactness", (state.u_hat.coeff(2, 3) - a0 * decay).norm() <= 1e-12 * (a0 * decay).norm());
    }

    let rows: Vec<Diagnostics> = (0..50)
        .map(|k| {
            let t = 0.1 * k as f64 + 1e-17 * k as f64;
            Diagnostics { t, energy: -t.exp(), roughness: t.sqrt() / 3.0, slope: 1.0 / (1.0 + t), mass: 1e-19 * k as f64 }
        })
        .collect();
    let mut buf = Vec::new();
    emit_csv(&mut buf, &rows).map_err(|e| e.to_string())?;
    fail("csv round trip", parse_diagnostics_csv(buf.as_slice()).map_err(|e| e.to_string())? == rows);
    let p = SchemeParams::setdms2(model, 0.125);
    let snap = Snapshot { header: Header::new(&p, &g16, 1500.0, 7), field: u0 };
    fail("snapshot round trip", Snapshot::from_bytes(&snap.to_bytes()).map_err(|e| e.to_string())? == snap);

    if failures.is_empty() {
        Ok("SBP, Parseval, beta bounds, mass over 1e4 steps, phi table, linear flow, round trips, determinism".into())
    } else {
        failures.dedup();
        Err(format!("failed: {}", failures.join(", ")))
    }
}

fn main() {
    let criteria: [Criterion; 5] = [
        (1, "temporal order", temporal_order),
        (2, "energy bound", energy_bound),
        (3, "scaling laws", scaling_laws),
        (4, "dense oracle", dense_oracle),
        (5, "invariant suites", invariants),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}, {secs:.0} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}, {secs:.0} s): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
