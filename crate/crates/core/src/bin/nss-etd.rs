use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nss_etd::analysis::{FitModel, FitWindow};
use nss_etd::app::{self, AppError, ORACLE_TOLERANCE};
use nss_etd::io::load_config;

#[derive(Parser)]
#[command(name = "nss-etd", version, about = "Thin-film epitaxy solver with exponential time differencing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Log,
    Power,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation described by a config file.
    Run {
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Temporal convergence study on the manufactured problem.
    Converge { config: PathBuf },
    /// Fit a diagnostics CSV to `a ln t + b` or `a t^b`.
    Fit {
        csv: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Fit window as `lo,hi`.
        #[arg(long, default_value = "1,1000")]
        window: String,
        /// Column to fit (default: energy for log, roughness and slope for power).
        #[arg(long)]
        column: Option<String>,
    },
    /// Compare the spectral steppers with the dense oracle on an M x M grid.
    Oracle {
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_window(s: &str) -> Result<FitWindow, AppError> {
    let bad = || AppError::Usage(format!("--window expects 'lo,hi', got '{s}'"));
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok(FitWindow::new(lo, hi))
}

fn execute(cmd: Command) -> Result<(), AppError> {
    match cmd {
        Command::Run { config, resume } => {
            let cfg = load_config(&config)?;
            let s = app::run_simulation(&cfg, resume.as_deref())?;
            println!("t = {} steps = {} rows = {} output = {}", s.final_t, s.steps, s.rows_written, s.output.display());
            if let Some(e) = s.relative_error {
                println!("relative error = {e:.16e}");
            }
        }
        Command::Converge { config } => {
            let cfg = load_config(&config)?;
            let reports = app::converge(&cfg)?;
            app::write_convergence_table(std::io::stdout().lock(), &reports)
                .map_err(|source| AppError::Io { path: "<stdout>".into(), source })?;
        }
        Command::Fit { csv, model, window, column } => {
            let model = match model {
                ModelArg::Log => FitModel::Log,
                ModelArg::Power => FitModel::Power,
            };
            for (name, r) in app::fit(&csv, model, parse_window(&window)?, column.as_deref())? {
                println!(
                    "{name}: a = {:.6} b = {:.6} rms = {:.3e} samples = {} window = [{}, {}]",
                    r.a, r.b, r.rms_residual, r.samples, r.window.lo, r.window.hi
                );
            }
        }
        Command::Oracle { m, seed } => {
            let mut worst = 0.0_f64;
            for (scheme, dev) in app::oracle_report(m, seed)? {
                println!("{scheme:<8} M = {m} max deviation = {dev:.3e}");
                worst = worst.max(dev);
            }
            if !(worst <= ORACLE_TOLERANCE) {
                return Err(AppError::OracleTolerance { deviation: worst, tolerance: ORACLE_TOLERANCE });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
