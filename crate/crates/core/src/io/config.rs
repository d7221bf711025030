//! Plain-text run configuration.
//!
//! One `key = value` per line; `#` starts a comment. Numeric values accept
//! constant expressions (`2*pi`, `(2 + sqrt(3))/6`). Keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `L` | required | side of the periodic square |
//! | `M` | required | grid points per direction (even) |
//! | `eps2` | required | surface diffusion coefficient |
//! | `T` | required | final time |
//! | `scheme` | `setdms2` | `setdms2`, `etdms2` or `etd1` |
//! | `A` | `(2+sqrt(3))/6` | stabilization constant |
//! | `kappa` | `1/8` | splitting constant of the baselines |
//! | `tau` | | uniform step size |
//! | `schedule` | coarsening schedule | `tau@until, ..., tau` |
//! | `seed` | `0` | random initial data seed |
//! | `initial` | `random(0.05)` | `random(amp)`, `expr(...)`, `snapshot(path)` |
//! | `output` | `output` | output directory |
//! | `diag_every_step_until` | `10` | record every step until this time |
//! | `diag_per_decade` | `200` | geometric samples per decade afterwards |
//! | `snapshot_times` | none | comma-separated times |
//! | `checkpoint_at` | none | time at which to write `checkpoint.bin` |
//! | `dealias` | `false` | two-thirds rule on the nonlinear term |
//! | `forcing` | `none` | `none` or `manufactured` |
//! | `converge_base_tau` | `0.005` | convergence study base step |
//! | `converge_levels` | `6` | number of halvings |
//! | `converge_runs` | the configured scheme | `scheme:param, ...` |

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::expr::{eval_constant, Expr, ExpressionError};
use super::snapshot::{read_snapshot, SnapshotFormatError};
use crate::integrators::{Cadence, Scheme, SchemeParams, Segment, StepSchedule, STABILITY_THRESHOLD};
use crate::model::ModelParams;
use crate::spectral::{project_zero_mean, Field, GridSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid value for '{field}': {msg}")]
    Validation { field: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Expression(#[from] ExpressionError),
    #[error("initial snapshot: {0}")]
    Snapshot(#[from] SnapshotFormatError),
}

fn invalid(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Random { amplitude: f64 },
    Expression(Expr),
    Snapshot(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forcing {
    None,
    Manufactured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub length: f64,
    pub points: usize,
    pub eps2: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub a: f64,
    pub kappa: f64,
    pub schedule: StepSchedule,
    pub seed: u64,
    pub initial: InitialSpec,
    pub output: PathBuf,
    pub cadence: Cadence,
    pub snapshot_times: Vec<f64>,
    pub checkpoint_at: Option<f64>,
    pub dealias: bool,
    pub forcing: Forcing,
    pub converge_base_tau: f64,
    pub converge_levels: u32,
    pub converge_runs: Vec<SchemeParams>,
}

impl RunConfig {
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.length, self.points).expect("validated grid")
    }

    pub fn model(&self) -> ModelParams {
        ModelParams::new(self.eps2).expect("validated eps2").with_dealias(self.dealias)
    }

    pub fn scheme_params(&self) -> SchemeParams {
        SchemeParams { model: self.model(), a: self.a, kappa: self.kappa, scheme: self.scheme }
    }
}

const KEYS: &[&str] = &[
    "L",
    "M",
    "eps2",
    "T",
    "scheme",
    "A",
    "kappa",
    "tau",
    "schedule",
    "seed",
    "initial",
    "output",
    "diag_every_step_until",
    "diag_per_decade",
    "snapshot_times",
    "checkpoint_at",
    "dealias",
    "forcing",
    "converge_base_tau",
    "converge_levels",
    "converge_runs",
];

struct Entries {
    map: HashMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => eval_constant(v)
                .map(Some)
                .map_err(|e| ConfigError::Parse { line, msg: format!("{key}: {}", e.msg) }),
        }
    }

    fn integer(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| ConfigError::Parse { line, msg: format!("{key}: expected a non-negative integer, got '{v}'") }),
        }
    }

    fn required(&self, key: &str) -> Result<f64, ConfigError> {
        self.number(key)?.ok_or_else(|| invalid(key, "missing required key"))
    }

    fn number_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let Some((line, v)) = self.raw(key) else { return Ok(Vec::new()) };
        v.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| eval_constant(s).map_err(|e| ConfigError::Parse { line, msg: format!("{key}: {}", e.msg) }))
            .collect()
    }
}

fn split_lines(text: &str) -> Result<Entries, ConfigError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line, msg: format!("expected 'key = value', got '{content}'") })?;
        let k = k.trim();
        let key = KEYS
            .iter()
            .copied()
            .find(|&known| known == k)
            .ok_or_else(|| ConfigError::Parse { line, msg: format!("unknown key '{k}'") })?;
        if map.insert(key, (line, v.trim().to_string())).is_some() {
            return Err(ConfigError::Parse { line, msg: format!("duplicate key '{k}'") });
        }
    }
    Ok(Entries { map })
}

/// `tau@until, ..., tau`; the last entry may omit `@until` to run to `T`.
pub fn parse_schedule(text: &str, horizon: f64) -> Result<StepSchedule, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        return Err("empty schedule".into());
    }
    let mut breaks = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        let (tau, until) = match p.split_once('@') {
            Some((t, u)) => (t, Some(u)),
            None if i + 1 == parts.len() => (*p, None),
            None => return Err(format!("entry '{p}' needs '@until'")),
        };
        let tau = eval_constant(tau).map_err(|e| e.msg)?;
        let until = match until {
            Some(u) => eval_constant(u).map_err(|e| e.msg)?,
            None => f64::INFINITY,
        };
        breaks.push((tau, until));
    }
    StepSchedule::piecewise(&breaks, horizon).map_err(|e| e.to_string())
}

fn parse_initial(text: &str) -> Result<InitialSpec, String> {
    let call = |name: &str| -> Option<&str> {
        text.strip_prefix(name)
            .map(str::trim_start)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
    };
    if text == "random" {
        return Ok(InitialSpec::Random { amplitude: 0.05 });
    }
    if let Some(arg) = call("random") {
        let amplitude = eval_constant(arg).map_err(|e| e.msg)?;
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err("amplitude must be finite and >= 0".into());
        }
        return Ok(InitialSpec::Random { amplitude });
    }
    if let Some(arg) = call("expr") {
        return Expr::parse(arg).map(InitialSpec::Expression).map_err(|e| e.to_string());
    }
    if let Some(arg) = call("snapshot") {
        let path = arg.trim();
        if path.is_empty() {
            return Err("empty snapshot path".into());
        }
        return Ok(InitialSpec::Snapshot(PathBuf::from(path)));
    }
    Err(format!("expected random(amp), expr(...) or snapshot(path), got '{text}'"))
}

fn parse_runs(text: &str, model: ModelParams) -> Result<Vec<SchemeParams>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, param) = item.split_once(':').ok_or_else(|| format!("'{item}' is not scheme:param"))?;
            let scheme: Scheme = name.parse()?;
            let v = eval_constant(param).map_err(|e| e.msg)?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("'{item}': parameter must be finite and >= 0"));
            }
            Ok(match scheme {
                Scheme::Setdms2 => SchemeParams::setdms2(model, v),
                Scheme::Etdms2 => SchemeParams::etdms2(model, v),
                Scheme::Etd1 => SchemeParams::etd1(model, v),
            })
        })
        .collect()
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = split_lines(text)?;

    let length = positive("L", e.required("L")?)?;
    let m = e.required("M")?;
    if !(m >= 2.0 && m.fract() == 0.0 && m <= 65536.0 && (m as u64).is_multiple_of(2)) {
        return Err(invalid("M", format!("must be an even integer >= 2, got {m}")));
    }
    let points = m as usize;
    let eps2 = positive("eps2", e.required("eps2")?)?;
    let horizon = non_negative("T", e.required("T")?)?;

    let scheme = match e.raw("scheme") {
        None => Scheme::Setdms2,
        Some((line, v)) => v.parse().map_err(|msg| ConfigError::Parse { line, msg })?,
    };
    let a = non_negative("A", e.number("A")?.unwrap_or(STABILITY_THRESHOLD))?;
    let kappa = non_negative("kappa", e.number("kappa")?.unwrap_or(0.125))?;

    let schedule = match (e.raw("tau"), e.raw("schedule")) {
        (Some(_), Some((line, _))) => {
            return Err(ConfigError::Parse { line, msg: "give either 'tau' or 'schedule', not both".into() })
        }
        (Some(_), None) => {
            let tau = positive("tau", e.number("tau")?.unwrap_or(0.0))?;
            if horizon == 0.0 {
                StepSchedule::new(vec![Segment { t_end: 0.0, tau }])
            } else {
                StepSchedule::uniform(tau, horizon)
            }
            .map_err(|err| invalid("tau", err.to_string()))?
        }
        (None, Some((_, v))) => parse_schedule(v, horizon).map_err(|msg| invalid("schedule", msg))?,
        (None, None) if horizon == 0.0 => {
            StepSchedule::new(vec![Segment { t_end: 0.0, tau: 0.001 }]).map_err(|err| invalid("T", err.to_string()))?
        }
        (None, None) => StepSchedule::coarsening(horizon).map_err(|err| invalid("schedule", err.to_string()))?,
    };

    let seed = e.integer("seed")?.unwrap_or(0);
    let initial = match e.raw("initial") {
        None => InitialSpec::Random { amplitude: 0.05 },
        Some((_, v)) => parse_initial(v).map_err(|msg| invalid("initial", msg))?,
    };
    let output = e.raw("output").map_or_else(|| PathBuf::from("output"), |(_, v)| PathBuf::from(v));

    let every = non_negative("diag_every_step_until", e.number("diag_every_step_until")?.unwrap_or(10.0))?;
    let per_decade = non_negative("diag_per_decade", e.number("diag_per_decade")?.unwrap_or(200.0))?;
    let mut snapshot_times = e.number_list("snapshot_times")?;
    for &t in &snapshot_times {
        if !(0.0..=horizon).contains(&t) {
            return Err(invalid("snapshot_times", format!("{t} lies outside [0, {horizon}]")));
        }
    }
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let checkpoint_at = e.number("checkpoint_at")?;
    if let Some(t) = checkpoint_at {
        if !(t > 0.0 && t <= horizon) {
            return Err(invalid("checkpoint_at", format!("{t} lies outside (0, {horizon}]")));
        }
    }
    let cadence = Cadence { every_step_until: every, per_decade, extra_times: snapshot_times.clone() };

    let dealias = match e.raw("dealias") {
        None => false,
        Some((line, v)) => match v {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            _ => return Err(ConfigError::Parse { line, msg: format!("dealias: expected true or false, got '{v}'") }),
        },
    };
    let forcing = match e.raw("forcing") {
        None => Forcing::None,
        Some((_, "none")) => Forcing::None,
        Some((_, "manufactured")) => Forcing::Manufactured,
        Some((line, v)) => {
            return Err(ConfigError::Parse { line, msg: format!("forcing: expected none or manufactured, got '{v}'") })
        }
    };
    if forcing == Forcing::Manufactured && (length - 2.0 * PI).abs() > 1e-12 {
        return Err(invalid("L", "the manufactured problem lives on [0, 2 pi]^2"));
    }

    let converge_base_tau = positive("converge_base_tau", e.number("converge_base_tau")?.unwrap_or(0.005))?;
    let converge_levels = e.integer("converge_levels")?.unwrap_or(6);
    if !(1..=20).contains(&converge_levels) {
        return Err(invalid("converge_levels", "must lie in 1..=20"));
    }
    let model = ModelParams::new(eps2).map_err(|err| invalid("eps2", err.to_string()))?.with_dealias(dealias);
    let this = SchemeParams { model, a, kappa, scheme };
    let converge_runs = match e.raw("converge_runs") {
        None => vec![this],
        Some((_, v)) => parse_runs(v, model).map_err(|msg| invalid("converge_runs", msg))?,
    };

    Ok(RunConfig {
        length,
        points,
        eps2,
        horizon,
        scheme,
        a,
        kappa,
        schedule,
        seed,
        initial,
        output,
        cadence,
        snapshot_times,
        checkpoint_at,
        dealias,
        forcing,
        converge_base_tau,
        converge_levels: converge_levels as u32,
        converge_runs,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Seeded i.i.d. uniform values on `[-amp, amp]`, shifted to zero mean.
pub fn random_field(grid: GridSpec, amplitude: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| amplitude * rng.random_range(-1.0..=1.0)).collect();
    project_zero_mean(&Field::from_values(grid, values).expect("grid-sized vector"))
}

pub fn make_initial(cfg: &RunConfig) -> Result<Field, ConfigError> {
    let grid = cfg.grid();
    match &cfg.initial {
        InitialSpec::Random { amplitude } => Ok(random_field(grid, *amplitude, cfg.seed)),
        InitialSpec::Expression(e) => {
            let f = Field::from_fn(grid, |x, y| e.eval(x, y, cfg.length));
            if f.is_finite() {
                Ok(f)
            } else {
                Err(invalid("initial", format!("'{e}' is not finite at every node")))
            }
        }
        InitialSpec::Snapshot(path) => {
            let snap = read_snapshot(path)?;
            if snap.header.points != cfg.points as u64 || snap.header.length != cfg.length {
                return Err(invalid(
                    "initial",
                    format!(
                        "snapshot grid M = {}, L = {} does not match M = {}, L = {}",
                        snap.header.points, snap.header.length, cfg.points, cfg.length
                    ),
                ));
            }
            Ok(snap.field)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled() {
        let c = parse_config("L = 12.8\nM = 64\neps2 = 0.005\nT = 100\n").unwrap();
        assert_eq!(c.scheme, Scheme::Setdms2);
        assert_eq!(c.a, STABILITY_THRESHOLD);
        assert_eq!(c.kappa, 0.125);
        assert_eq!(c.seed, 0);
        assert_eq!(c.initial, InitialSpec::Random { amplitude: 0.05 });
        assert_eq!(c.schedule, StepSchedule::coarsening(100.0).unwrap());
        assert_eq!(c.cadence, Cadence::default());
        assert_eq!(c.converge_runs, vec![c.scheme_params()]);
    }

    #[test]
    fn empty_file_names_missing_key() {
        match parse_config("# nothing here\n\n") {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "L"),
            other => panic!("{other:?}"),
        }
        match parse_config("L = 1\nM = 8\nT = 1") {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "eps2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let base = "L = 12.8\nM = 64\neps2 = 0.005\nT = 1\n";
        for (extra, line) in [("A = abc", 5), ("bogus = 1", 5), ("no equals sign", 5), ("L = 3", 5), ("seed = -1", 5)] {
            match parse_config(&format!("{base}{extra}\n")) {
                Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{extra}"),
                other => panic!("{extra}: {other:?}"),
            }
        }
    }

    #[test]
    fn validation_errors_name_the_field() {
        for (text, field) in [
            ("L = -1\nM = 8\neps2 = 1\nT = 1", "L"),
            ("L = 1\nM = 7\neps2 = 1\nT = 1", "M"),
            ("L = 1\nM = 8\neps2 = 0\nT = 1", "eps2"),
            ("L = 1\nM = 8\neps2 = 1\nT = 1\ntau = 0.3", "tau"),
            ("L = 1\nM = 8\neps2 = 1\nT = 1\nschedule = 0.1@0.5, 0.2@0.8", "schedule"),
            ("L = 1\nM = 8\neps2 = 1\nT = 1\nforcing = manufactured", "L"),
            ("L = 1\nM = 8\neps2 = 1\nT = 1\ninitial = expr(z)", "initial"),
        ] {
            match parse_config(text) {
                Err(ConfigError::Validation { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn schedule_syntax() {
        let s = parse_schedule("0.001@200, 0.01@1000, 0.02@2000, 0.04", 1000.0).unwrap();
        assert_eq!(s, StepSchedule::coarsening(1000.0).unwrap());
        let s = parse_schedule("0.1@1, 0.5", 3.0).unwrap();
        assert_eq!(s.total_steps(), 14);
    }

    #[test]
    fn random_initial_data_is_seeded() {
        let g = GridSpec::new(12.8, 32).unwrap();
        let a = random_field(g, 0.05, 42);
        let b = random_field(g, 0.05, 42);
        let c = random_field(g, 0.05, 43);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!(a.mean().abs() < 1e-17);
        assert!(a.max_abs() <= 0.1);
    }

    #[test]
    fn converge_runs_list() {
        let c = parse_config(
            "L = 2*pi\nM = 16\neps2 = 0.01\nT = 1\nforcing = manufactured\nconverge_runs = setdms2:1/8, etdms2:0.125",
        )
        .unwrap();
        assert_eq!(c.converge_runs.len(), 2);
        assert_eq!(c.converge_runs[0].a, 0.125);
        assert_eq!(c.converge_runs[1].scheme, Scheme::Etdms2);
    }
}
