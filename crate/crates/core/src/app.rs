//! Command implementations behind the `nss-etd` binary.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 solver blow-up,
//! 4 IO or file-format error. `oracle` exits 1 when a deviation exceeds
//! its tolerance.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::analysis::{
    emit_report_csv, fit_log, fit_power, parse_diagnostics_csv, read_series, AnalysisError, DiagnosticsWriter,
    FitModel, FitResult, FitWindow, DIAGNOSTICS_HEADER,
};
use crate::integrators::{IntegratorError, NonlinearTerm, NssTerm, RunState, Runner, Scheme, SchemeParams};
use crate::io::{
    make_initial, random_field, read_checkpoint, write_checkpoint, write_snapshot, Checkpoint, ConfigError, Forcing,
    Header, RunConfig, Snapshot, SnapshotFormatError,
};
use crate::model::{Diagnostics, ModelParams};
use crate::oracle::max_deviation;
use crate::spectral::GridSpec;
use crate::verification::{convergence_study, halving_taus, relative_error, ConvergenceReport, ForcedProblem, VerificationError};
use crate::STABILITY_THRESHOLD;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("solver: {0}")]
    Solver(#[from] IntegratorError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(#[from] SnapshotFormatError),
    #[error("{0}")]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Verification(#[from] VerificationError),
    #[error("oracle deviation {deviation:e} exceeds {tolerance:e}")]
    OracleTolerance { deviation: f64, tolerance: f64 },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(ConfigError::Io { .. } | ConfigError::Snapshot(_)) => 4,
            AppError::Config(_) | AppError::Usage(_) => 2,
            AppError::Solver(e) | AppError::Verification(VerificationError::Integrator(e)) => match e {
                IntegratorError::NonFinite { .. } => 3,
                _ => 2,
            },
            AppError::Verification(_) => 2,
            AppError::Io { .. } | AppError::Format(_) => 4,
            AppError::Analysis(AnalysisError::Io { .. } | AnalysisError::Csv(_) | AnalysisError::Parse { .. }) => 4,
            AppError::Analysis(_) => 2,
            AppError::OracleTolerance { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io { path: path.to_path_buf(), source }
}

/// Outcome of [`run_simulation`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_t: f64,
    pub steps: u64,
    pub rows_written: usize,
    /// Relative error against the exact solution for manufactured runs.
    pub relative_error: Option<f64>,
    pub output: PathBuf,
}

pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_{t}.bin")
}

fn check_resume_header(h: &Header, cfg: &RunConfig) -> Result<(), AppError> {
    let p = cfg.scheme_params();
    let mismatch = |field: &str, have: String, want: String| {
        AppError::Config(ConfigError::Validation {
            field: field.to_string(),
            msg: format!("checkpoint has {have}, config has {want}"),
        })
    };
    if h.points != cfg.points as u64 {
        return Err(mismatch("M", h.points.to_string(), cfg.points.to_string()));
    }
    for (field, have, want) in [("L", h.length, cfg.length), ("eps2", h.eps2, p.model.eps2), ("A", h.a, p.a), ("kappa", h.kappa, p.kappa)] {
        if have != want {
            return Err(mismatch(field, have.to_string(), want.to_string()));
        }
    }
    if h.scheme != p.scheme {
        return Err(mismatch("scheme", h.scheme.to_string(), p.scheme.to_string()));
    }
    Ok(())
}

/// Opens `diagnostics.csv` for a run. A fresh run truncates it; a resumed run
/// keeps the rows recorded up to the checkpoint and appends after them.
fn open_diagnostics(path: &Path, resume_t: Option<f64>) -> Result<DiagnosticsWriter<BufWriter<File>>, AppError> {
    let Some(t0) = resume_t else {
        let f = File::create(path).map_err(io_err(path))?;
        return Ok(DiagnosticsWriter::new(BufWriter::new(f), true)?);
    };
    let kept: Vec<Diagnostics> = match File::open(path) {
        Ok(f) => parse_diagnostics_csv(f)?.into_iter().filter(|d| d.t <= t0 * (1.0 + 1e-12)).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(AppError::Io { path: path.to_path_buf(), source: e }),
    };
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = DiagnosticsWriter::new(BufWriter::new(f), true)?;
    for d in &kept {
        w.write(d)?;
    }
    Ok(w)
}

struct Outputs {
    dir: PathBuf,
    writer: DiagnosticsWriter<BufWriter<File>>,
    snapshot_times: Vec<f64>,
    next_snapshot: usize,
    header: Header,
    rows: usize,
    energy0: Option<f64>,
    energy_warned: bool,
    check_energy: bool,
    error: Option<AppError>,
}

impl Outputs {
    fn observe(&mut self, st: &RunState, d: &Diagnostics, tau: f64) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.writer.write(d) {
            self.error = Some(e.into());
            return;
        }
        self.rows += 1;
        if self.check_energy {
            let e0 = *self.energy0.get_or_insert(d.energy);
            if d.energy > e0 + 1e-8 && !self.energy_warned {
                log::warn!("energy rose above its initial value at t = {}: {} > {}", d.t, d.energy, e0);
                self.energy_warned = true;
            }
        }
        while self.next_snapshot < self.snapshot_times.len()
            && self.snapshot_times[self.next_snapshot] <= d.t + 0.5 * tau
        {
            let target = self.snapshot_times[self.next_snapshot];
            self.next_snapshot += 1;
            let path = self.dir.join(snapshot_name(target));
            let snap = Snapshot { header: Header { t: st.stepper.t, ..self.header }, field: st.stepper.u_curr() };
            if let Err(e) = write_snapshot(&path, &snap) {
                self.error = Some(e.into());
                return;
            }
            log::info!("wrote {}", path.display());
        }
    }
}

fn drive<N: NonlinearTerm>(
    cfg: &RunConfig,
    mut state: RunState,
    make_term: impl Fn() -> N,
    out: &mut Outputs,
) -> Result<RunState, AppError> {
    let p = cfg.scheme_params();
    let tau_of = |st: &RunState| cfg.schedule.snap_tau(st.segment, st.steps_in_segment);
    if let Some(tc) = cfg.checkpoint_at {
        let tau = tau_of(&state);
        if state.stepper.t < tc - 0.5 * tau {
            let mut runner = Runner::new(p, cfg.schedule.clone(), make_term())
                .cadence(cfg.cadence.clone())
                .stop_at(Some(tc));
            state = runner.run(state, |st, d| out.observe(st, d, tau_of(st)))?;
            if let Some(e) = out.error.take() {
                return Err(e);
            }
            out.writer.flush()?;
            let path = out.dir.join("checkpoint.bin");
            write_checkpoint(&path, &Checkpoint { header: out.header, state: state.clone() })?;
            log::info!("wrote {} at t = {}", path.display(), state.stepper.t);
        }
    }
    let mut runner = Runner::new(p, cfg.schedule.clone(), make_term()).cadence(cfg.cadence.clone());
    state = runner.run(state, |st, d| out.observe(st, d, tau_of(st)))?;
    if let Some(e) = out.error.take() {
        return Err(e);
    }
    Ok(state)
}

/// Runs one configured simulation, optionally resuming from a checkpoint.
///
/// Writes `diagnostics.csv`, `snapshot_<t>.bin` at the configured times,
/// `checkpoint.bin` at `checkpoint_at`, and `final.bin`.
pub fn run_simulation(cfg: &RunConfig, resume: Option<&Path>) -> Result<RunSummary, AppError> {
    let p = cfg.scheme_params();
    p.validate()?;
    let grid = cfg.grid();
    fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    let header = Header::new(&p, &grid, 0.0, cfg.seed);

    let (state, resume_t) = match resume {
        Some(path) => {
            let ckpt = read_checkpoint(path)?;
            check_resume_header(&ckpt.header, cfg)?;
            if ckpt.state.segment > cfg.schedule.segments().len() {
                return Err(AppError::Usage(format!("checkpoint segment {} beyond schedule", ckpt.state.segment)));
            }
            log::info!("resuming from t = {}", ckpt.state.stepper.t);
            let t = ckpt.state.stepper.t;
            (ckpt.state, Some(t))
        }
        None => (RunState::start(&make_initial(cfg)?), None),
    };
    let start_t = state.stepper.t;
    let start_step = state.stepper.step_index;

    let diag_path = cfg.output.join("diagnostics.csv");
    let writer = open_diagnostics(&diag_path, resume_t)?;
    let snap = cfg.schedule.snap_tau(state.segment, state.steps_in_segment);
    let next_snapshot = cfg.snapshot_times.partition_point(|&t| resume_t.is_some_and(|r| t <= r + 0.5 * snap));
    let mut out = Outputs {
        dir: cfg.output.clone(),
        writer,
        snapshot_times: cfg.snapshot_times.clone(),
        next_snapshot,
        header,
        rows: 0,
        energy0: None,
        energy_warned: false,
        check_energy: resume.is_none()
            && cfg.forcing == Forcing::None
            && p.scheme == Scheme::Setdms2
            && p.a >= STABILITY_THRESHOLD,
        error: None,
    };

    let end = match cfg.forcing {
        Forcing::None => drive(cfg, state, || NssTerm::new(grid, &p.model), &mut out),
        Forcing::Manufactured => {
            let prob = ForcedProblem::new(p.model, cfg.points).map_err(VerificationError::from)?;
            drive(cfg, state, || prob.term(), &mut out)
        }
    };
    out.writer.flush()?;
    let end = end?;

    let u = end.stepper.u_curr();
    let final_path = cfg.output.join("final.bin");
    write_snapshot(&final_path, &Snapshot { header: Header { t: end.stepper.t, ..header }, field: u.clone() })?;

    let relative_error = match cfg.forcing {
        Forcing::None => None,
        Forcing::Manufactured => {
            let prob = ForcedProblem::new(p.model, cfg.points).map_err(VerificationError::from)?;
            let err = relative_error(&u, end.stepper.t, &prob)?;
            log::info!("relative error at t = {}: {:e}", end.stepper.t, err);
            Some(err)
        }
    };
    log::info!(
        "finished at t = {} after {} steps (from t = {})",
        end.stepper.t,
        end.stepper.step_index - start_step,
        start_t
    );
    Ok(RunSummary {
        final_t: end.stepper.t,
        steps: end.stepper.step_index,
        rows_written: out.rows,
        relative_error,
        output: cfg.output.clone(),
    })
}

fn file_label(p: &SchemeParams) -> String {
    match p.scheme {
        Scheme::Setdms2 => format!("setdms2_A{}", p.a),
        s => format!("{s}_kappa{}", p.kappa),
    }
}

/// Temporal convergence study on the manufactured problem. Writes one
/// `convergence_<run>.csv` per configured run plus `convergence_summary.csv`.
pub fn converge(cfg: &RunConfig) -> Result<Vec<ConvergenceReport>, AppError> {
    if (cfg.length - 2.0 * std::f64::consts::PI).abs() > 1e-12 {
        return Err(ConfigError::Validation {
            field: "L".into(),
            msg: "the manufactured problem lives on [0, 2 pi]^2".into(),
        }
        .into());
    }
    let prob = ForcedProblem::new(cfg.model(), cfg.points).map_err(VerificationError::from)?;
    let taus = halving_taus(cfg.converge_base_tau, cfg.converge_levels);
    let reports = convergence_study(&prob, &cfg.converge_runs, &taus, cfg.horizon)?;
    fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    for (p, r) in cfg.converge_runs.iter().zip(&reports) {
        let path = cfg.output.join(format!("convergence_{}.csv", file_label(p)));
        let f = File::create(&path).map_err(io_err(&path))?;
        emit_report_csv(BufWriter::new(f), r)?;
    }
    let path = cfg.output.join("convergence_summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(AnalysisError::from)?;
    w.write_record(["run", "summary_order"]).map_err(AnalysisError::from)?;
    for r in &reports {
        w.write_record([r.label.clone(), crate::analysis::format_f64(r.summary_order)]).map_err(AnalysisError::from)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(reports)
}

/// Fits one or more diagnostics columns. Without an explicit column the log
/// model fits `energy` and the power model fits `roughness` and `slope`.
pub fn fit(csv: &Path, model: FitModel, window: FitWindow, column: Option<&str>) -> Result<Vec<(String, FitResult)>, AppError> {
    let columns: Vec<&str> = match (column, model) {
        (Some(c), _) => {
            if !DIAGNOSTICS_HEADER[1..].contains(&c) {
                return Err(AnalysisError::UnknownColumn(c.to_string()).into());
            }
            vec![c]
        }
        (None, FitModel::Log) => vec!["energy"],
        (None, FitModel::Power) => vec!["roughness", "slope"],
    };
    columns
        .into_iter()
        .map(|c| {
            let series = read_series(csv, c)?;
            let r = match model {
                FitModel::Log => fit_log(&series, window)?,
                FitModel::Power => fit_power(&series, window)?,
            };
            Ok((c.to_string(), r))
        })
        .collect()
}

pub const ORACLE_TOLERANCE: f64 = 1e-10;

/// Max-norm gap between each spectral stepper and the dense oracle over five
/// steps from seeded random data on an `M x M` grid.
pub fn oracle_report(points: usize, seed: u64) -> Result<Vec<(Scheme, f64)>, AppError> {
    if !(2..=12).contains(&points) || !points.is_multiple_of(2) {
        return Err(AppError::Usage(format!("oracle grid M must be even and in 2..=12, got {points}")));
    }
    let grid = GridSpec::two_pi(points).map_err(VerificationError::from)?;
    let model = ModelParams::new(0.1).expect("positive eps2");
    let u0 = random_field(grid, 1.0, seed);
    [
        SchemeParams::etd1(model, 0.125),
        SchemeParams::etdms2(model, 0.125),
        SchemeParams::setdms2(model, STABILITY_THRESHOLD),
    ]
    .iter()
    .map(|p| Ok((p.scheme, max_deviation(&u0, p, 0.05, 5)?)))
    .collect()
}

/// Appends a human-readable table of convergence reports.
pub fn write_convergence_table<W: Write>(mut out: W, reports: &[ConvergenceReport]) -> std::io::Result<()> {
    for r in reports {
        writeln!(out, "{}", r.label)?;
        for (i, (tau, err)) in r.taus.iter().zip(&r.errors).enumerate() {
            match i.checked_sub(1).map(|k| r.orders[k]) {
                Some(o) => writeln!(out, "  tau = {tau:<12e} error = {err:.6e}  order = {o:.4}")?,
                None => writeln!(out, "  tau = {tau:<12e} error = {err:.6e}")?,
            }
        }
        writeln!(out, "  summary order = {:.4}", r.summary_order)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let cfg = AppError::Config(ConfigError::Parse { line: 1, msg: String::new() });
        assert_eq!(cfg.exit_code(), 2);
        assert_eq!(AppError::Solver(IntegratorError::NonFinite { step: 3, t: 0.1 }).exit_code(), 3);
        let io = AppError::Io { path: PathBuf::from("x"), source: std::io::Error::other("x") };
        assert_eq!(io.exit_code(), 4);
        assert_eq!(AppError::Format(SnapshotFormatError::BadMagic).exit_code(), 4);
    }

    #[test]
    fn oracle_report_is_tight() {
        for (scheme, dev) in oracle_report(4, 7).unwrap() {
            assert!(dev < ORACLE_TOLERANCE, "{scheme}: {dev:e}");
        }
        assert!(oracle_report(5, 0).is_err());
    }
}
