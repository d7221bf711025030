//! Scaling-law fits over diagnostics time series, and CSV output.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::model::Diagnostics;
use crate::verification::ConvergenceReport;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("fit window [{lo}, {hi}] holds {count} samples; need at least 2")]
    EmptyWindow { lo: f64, hi: f64, count: usize },
    #[error("log-time fit needs t > 0; got t = {0}")]
    NonPositiveTime(f64),
    #[error("power-law fit needs positive values; got {value} at t = {t}")]
    NonPositiveValue { t: f64, value: f64 },
    #[error("sample times must be strictly increasing (t = {0})")]
    NotIncreasing(f64),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv line {line}: cannot parse '{field}' as a number")]
    Parse { line: u64, field: String },
}

/// Ordered `(t, value)` samples of one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub name: String,
    pub run_id: String,
    samples: Vec<(f64, f64)>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self, AnalysisError> {
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(AnalysisError::NotIncreasing(w[1].0));
            }
        }
        Ok(Self { name: name.into(), run_id: String::new(), samples })
    }

    pub fn from_fn(name: &str, times: impl IntoIterator<Item = f64>, f: impl Fn(f64) -> f64) -> Result<Self, AnalysisError> {
        Self::new(name, times.into_iter().map(|t| (t, f(t))).collect())
    }

    pub fn with_run_id(mut self, id: impl Into<String>) -> Self {
        self.run_id = id.into();
        self
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Extracts one quantity from a diagnostics record list. Repeated times
    /// keep the first sample.
    pub fn from_diagnostics(rows: &[Diagnostics], quantity: &str) -> Result<Self, AnalysisError> {
        let pick: fn(&Diagnostics) -> f64 = match quantity {
            "energy" => |d| d.energy,
            "roughness" => |d| d.roughness,
            "slope" => |d| d.slope,
            "mass" => |d| d.mass,
            other => return Err(AnalysisError::UnknownColumn(other.to_string())),
        };
        let mut samples: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
        for d in rows {
            if samples.last().is_none_or(|&(t, _)| d.t > t) {
                samples.push((d.t, pick(d)));
            }
        }
        Self::new(quantity, samples)
    }

    fn window(&self, w: FitWindow) -> Vec<(f64, f64)> {
        self.samples.iter().copied().filter(|&(t, _)| t >= w.lo && t <= w.hi).collect()
    }
}

/// Inclusive time window for fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
}

impl FitWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

impl Default for FitWindow {
    fn default() -> Self {
        Self { lo: 1.0, hi: 1000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// `a ln t + b`
    Log,
    /// `a t^b`
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    pub model: FitModel,
    /// RMS residual in the regression variables (value for `Log`,
    /// `ln value` for `Power`).
    pub rms_residual: f64,
    pub window: FitWindow,
    pub samples: usize,
}

impl FitResult {
    pub fn predict(&self, t: f64) -> f64 {
        match self.model {
            FitModel::Log => self.a * t.ln() + self.b,
            FitModel::Power => self.a * t.powf(self.b),
        }
    }
}

/// Ordinary least squares `y = slope x + intercept`. `None` when fewer than
/// two points or all `x` coincide.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - mx;
        sxy += dx * (y[i] - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn rms(x: &[f64], y: &[f64], slope: f64, intercept: f64) -> f64 {
    let s: f64 = x.iter().zip(y).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    (s / x.len() as f64).sqrt()
}

fn windowed(series: &TimeSeries, window: FitWindow) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let pts = series.window(window);
    if pts.len() < 2 {
        return Err(AnalysisError::EmptyWindow { lo: window.lo, hi: window.hi, count: pts.len() });
    }
    if let Some(&(t, _)) = pts.iter().find(|(t, _)| *t <= 0.0) {
        return Err(AnalysisError::NonPositiveTime(t));
    }
    Ok(pts)
}

/// Fits `value ~ a ln t + b`.
pub fn fit_log(series: &TimeSeries, window: FitWindow) -> Result<FitResult, AnalysisError> {
    let pts = windowed(series, window)?;
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (a, b) = least_squares(&x, &y)
        .ok_or(AnalysisError::EmptyWindow { lo: window.lo, hi: window.hi, count: 1 })?;
    Ok(FitResult { a, b, model: FitModel::Log, rms_residual: rms(&x, &y, a, b), window, samples: pts.len() })
}

/// Fits `value ~ a t^b` by least squares in log-log space.
pub fn fit_power(series: &TimeSeries, window: FitWindow) -> Result<FitResult, AnalysisError> {
    let pts = windowed(series, window)?;
    if let Some(&(t, value)) = pts.iter().find(|(_, v)| *v <= 0.0) {
        return Err(AnalysisError::NonPositiveValue { t, value });
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (b, ln_a) = least_squares(&x, &y)
        .ok_or(AnalysisError::EmptyWindow { lo: window.lo, hi: window.hi, count: 1 })?;
    Ok(FitResult {
        a: ln_a.exp(),
        b,
        model: FitModel::Power,
        rms_residual: rms(&x, &y, b, ln_a),
        window,
        samples: pts.len(),
    })
}

pub const DIAGNOSTICS_HEADER: [&str; 5] = ["t", "energy", "roughness", "slope", "mass"];
pub const REPORT_HEADER: [&str; 3] = ["tau", "error", "order"];

/// 17 significant digits; parses back to the identical double.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes diagnostics as `t,energy,roughness,slope,mass`.
pub fn emit_csv<W: Write>(out: W, rows: &[Diagnostics]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIAGNOSTICS_HEADER)?;
    for d in rows {
        w.write_record([d.t, d.energy, d.roughness, d.slope, d.mass].map(format_f64))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Incremental diagnostics writer for long runs.
pub struct DiagnosticsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(out: W, header: bool) -> Result<Self, AnalysisError> {
        let mut inner = csv::Writer::from_writer(out);
        if header {
            inner.write_record(DIAGNOSTICS_HEADER)?;
        }
        Ok(Self { inner })
    }

    pub fn write(&mut self, d: &Diagnostics) -> Result<(), AnalysisError> {
        self.inner.write_record([d.t, d.energy, d.roughness, d.slope, d.mass].map(format_f64))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), AnalysisError> {
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Writes a convergence report as `tau,error,order`; the order column is
/// empty on the first row.
pub fn emit_report_csv<W: Write>(out: W, report: &ConvergenceReport) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for (i, (&tau, &err)) in report.taus.iter().zip(&report.errors).enumerate() {
        let order = if i == 0 { String::new() } else { format_f64(report.orders[i - 1]) };
        w.write_record([format_f64(tau), format_f64(err), order])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn parse_diagnostics_csv<R: Read>(input: R) -> Result<Vec<Diagnostics>, AnalysisError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = [0.0; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            let field = rec.get(k).unwrap_or("");
            *slot = field
                .trim()
                .parse()
                .map_err(|_| AnalysisError::Parse { line, field: field.to_string() })?;
        }
        rows.push(Diagnostics { t: v[0], energy: v[1], roughness: v[2], slope: v[3], mass: v[4] });
    }
    Ok(rows)
}

/// Reads one column of a diagnostics CSV as a series against `t`.
pub fn read_series(path: &Path, column: &str) -> Result<TimeSeries, AnalysisError> {
    let file = File::open(path).map_err(|source| AnalysisError::Io { path: path.to_path_buf(), source })?;
    let rows = parse_diagnostics_csv(file)?;
    Ok(TimeSeries::from_diagnostics(&rows, column)?.with_run_id(path.display().to_string()))
}

pub fn write_csv_file(path: &Path, rows: &[Diagnostics]) -> Result<(), AnalysisError> {
    let file = File::create(path).map_err(|source| AnalysisError::Io { path: path.to_path_buf(), source })?;
    emit_csv(BufWriter::new(file), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn log_times(n: usize) -> Vec<f64> {
        (0..n).map(|i| 10f64.powf(3.0 * i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn log_fit_recovers_generator() {
        let s = TimeSeries::from_fn("energy", log_times(400), |t| -39.36 * t.ln() - 54.36).unwrap();
        let f = fit_log(&s, FitWindow::default()).unwrap();
        assert!((f.a + 39.36).abs() < 1e-9);
        assert!((f.b + 54.36).abs() < 1e-9);
        assert!(f.rms_residual < 1e-10);
    }

    #[test]
    fn log_fit_small_cases() {
        let s = TimeSeries::from_fn("c", log_times(10), |_| 3.5).unwrap();
        let f = fit_log(&s, FitWindow::default()).unwrap();
        assert!(f.a.abs() < 1e-14 && (f.b - 3.5).abs() < 1e-14);

        let e = std::f64::consts::E;
        let s = TimeSeries::new("two", vec![(1.0, 2.0), (e, 2.0 + 0.7)]).unwrap();
        let f = fit_log(&s, FitWindow::new(0.5, 10.0)).unwrap();
        assert!((f.a - 0.7).abs() < 1e-14 && (f.b - 2.0).abs() < 1e-14);
    }

    #[test]
    fn power_fit_recovers_generators() {
        let s = TimeSeries::from_fn("r", log_times(300), |t| 2.0 * t.sqrt()).unwrap();
        let f = fit_power(&s, FitWindow::default()).unwrap();
        assert!((f.a - 2.0).abs() < 1e-10 && (f.b - 0.5).abs() < 1e-10);

        let s = TimeSeries::from_fn("r", log_times(300), |t| 0.4372 * t.powf(0.4867)).unwrap();
        let f = fit_power(&s, FitWindow::default()).unwrap();
        assert!((f.a - 0.4372).abs() < 1e-9 && (f.b - 0.4867).abs() < 1e-9);
        assert!((f.predict(100.0) - 0.4372 * 100f64.powf(0.4867)).abs() < 1e-9);
    }

    #[test]
    fn power_fit_tolerates_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples = (0..200)
            .map(|i| {
                let t = 10.0 * 10f64.powf(i as f64 / 199.0);
                let n: f64 = rng.random_range(-0.01..0.01);
                (t, 2.133 * t.powf(0.2614) * (1.0 + n))
            })
            .collect();
        let s = TimeSeries::new("noisy", samples).unwrap();
        let f = fit_power(&s, FitWindow::new(10.0, 100.0)).unwrap();
        assert!((f.b - 0.2614).abs() < 0.02, "{}", f.b);
    }

    #[test]
    fn fit_errors() {
        let s = TimeSeries::new("x", vec![(0.5, 1.0), (2000.0, 2.0)]).unwrap();
        assert!(matches!(fit_log(&s, FitWindow::default()), Err(AnalysisError::EmptyWindow { count: 0, .. })));
        let s = TimeSeries::new("x", vec![(0.0, 1.0), (1.0, 2.0)]).unwrap();
        assert!(matches!(fit_log(&s, FitWindow::new(0.0, 2.0)), Err(AnalysisError::NonPositiveTime(_))));
        let s = TimeSeries::new("x", vec![(1.0, 1.0), (2.0, -2.0)]).unwrap();
        assert!(matches!(fit_power(&s, FitWindow::default()), Err(AnalysisError::NonPositiveValue { .. })));
        assert!(matches!(TimeSeries::new("x", vec![(1.0, 1.0), (1.0, 2.0)]), Err(AnalysisError::NotIncreasing(_))));
    }

    #[test]
    fn subwindows_agree_on_exact_data() {
        let s = TimeSeries::from_fn("r", log_times(300), |t| 0.5 * t.powf(0.25)).unwrap();
        let a = fit_power(&s, FitWindow::new(1.0, 1000.0)).unwrap();
        let b = fit_power(&s, FitWindow::new(20.0, 300.0)).unwrap();
        assert!((a.b - b.b).abs() < 1e-12 && (a.a - b.a).abs() < 1e-12);
    }

    #[test]
    fn csv_shapes() {
        let mut buf = Vec::new();
        emit_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,energy,roughness,slope,mass\n");

        let d = Diagnostics { t: 0.1, energy: -1.0 / 3.0, roughness: 0.05, slope: 1e-300, mass: 0.0 };
        let mut buf = Vec::new();
        emit_csv(&mut buf, &[d]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 2);
        assert_eq!(parse_diagnostics_csv(&buf[..]).unwrap(), vec![d]);
    }

    #[test]
    fn report_csv() {
        let r = ConvergenceReport::from_errors("s", vec![0.2, 0.1], vec![4e-4, 1e-4]);
        let mut buf = Vec::new();
        emit_report_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "tau,error,order");
        assert!(lines[1].ends_with(','));
        assert!(lines[2].ends_with("2.0000000000000000e0"));
    }
}
