use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stats::{mean_sd, trailing_mean};
use super::{CellSettings, ExperimentSpec, MOVING_AVERAGE_WINDOW};
use crate::discrimination::Metrics;
use crate::error::{Error, Result};
use crate::training::{EvalMode, TrainConfig, TrainResult, TrajectoryPoint};

/// Rounds to 12 significant digits; every exported number goes through this.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() && x != 0.0 {
        format!("{x:.11e}").parse().expect("formatted float parses")
    } else {
        x
    }
}

fn round_metrics(m: Metrics) -> Metrics {
    Metrics { p_suc: round_sig(m.p_suc), p_err: round_sig(m.p_err), p_inc: round_sig(m.p_inc) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(vec![format!("format: unknown format {other:?} (csv or json)")])),
        }
    }
}

impl ExportFormat {
    /// Guess from a file extension.
    pub fn for_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

/// Outcome of one training run. Rates are prior-weighted; costs are the
/// unweighted training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub test: Metrics,
    pub train: Metrics,
    /// Exact cost at the final parameters.
    pub final_j1: f64,
    /// Cost seen by the optimizer at the last iteration.
    pub final_j1_estimated: f64,
    /// Trailing mean of the optimizer-seen cost.
    pub final_j1_moving_average: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_fidelity: Option<f64>,
}

impl RunRecord {
    pub fn new(run: usize, result: &TrainResult, mean_fidelity: Option<f64>) -> Self {
        let estimates: Vec<f64> = result.trajectory.iter().map(|p| p.j1_estimated).collect();
        let (last, smoothed) = if estimates.is_empty() {
            (result.final_j1, result.final_j1)
        } else {
            (estimates[estimates.len() - 1], trailing_mean(&estimates, MOVING_AVERAGE_WINDOW))
        };
        Self {
            run,
            seed: result.seed,
            test: round_metrics(result.test_metrics.unwrap_or_default()),
            train: round_metrics(result.train_metrics),
            final_j1: round_sig(result.final_j1),
            final_j1_estimated: round_sig(last),
            final_j1_moving_average: round_sig(smoothed),
            mean_fidelity: mean_fidelity.map(round_sig),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    fn of(xs: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = xs.collect();
        let (mean, sd) = mean_sd(&v);
        Self { mean: round_sig(mean), sd: round_sig(sd) }
    }
}

/// Means and standard deviations over the runs of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub test_mean: Metrics,
    pub test_sd: Metrics,
    pub train_mean: Metrics,
    pub train_sd: Metrics,
    pub final_j1: Stat,
    pub final_j1_estimated: Stat,
    pub final_j1_moving_average: Stat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_fidelity: Option<f64>,
}

impl Aggregate {
    fn over(runs: &[RunRecord]) -> Self {
        let metric = |f: fn(&RunRecord) -> Metrics| {
            let s = Stat::of(runs.iter().map(|r| f(r).p_suc));
            let e = Stat::of(runs.iter().map(|r| f(r).p_err));
            let i = Stat::of(runs.iter().map(|r| f(r).p_inc));
            (Metrics { p_suc: s.mean, p_err: e.mean, p_inc: i.mean }, Metrics { p_suc: s.sd, p_err: e.sd, p_inc: i.sd })
        };
        let (test_mean, test_sd) = metric(|r| r.test);
        let (train_mean, train_sd) = metric(|r| r.train);
        let fidelities: Vec<f64> = runs.iter().filter_map(|r| r.mean_fidelity).collect();
        Self {
            runs: runs.len(),
            test_mean,
            test_sd,
            train_mean,
            train_sd,
            final_j1: Stat::of(runs.iter().map(|r| r.final_j1)),
            final_j1_estimated: Stat::of(runs.iter().map(|r| r.final_j1_estimated)),
            final_j1_moving_average: Stat::of(runs.iter().map(|r| r.final_j1_moving_average)),
            mean_fidelity: (!fidelities.is_empty()).then(|| Stat::of(fidelities.into_iter()).mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub settings: CellSettings,
    pub runs: Vec<RunRecord>,
    /// Absent when any run failed.
    pub aggregate: Option<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellReport {
    pub(super) fn assemble(label: String, settings: CellSettings, outcomes: Vec<Result<RunRecord>>) -> Self {
        let mut runs = Vec::new();
        let mut error = None;
        for o in outcomes {
            match o {
                Ok(r) => runs.push(r),
                Err(e) => {
                    error.get_or_insert_with(|| format!("{}: {e}", e.kind()));
                }
            }
        }
        let aggregate = error.is_none().then(|| Aggregate::over(&runs));
        Self { label, settings, runs, aggregate, error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub repetitions: usize,
    /// Per-run seeds, shared by every cell.
    pub seeds: Vec<u64>,
    pub spec: ExperimentSpec,
    pub cells: Vec<CellReport>,
}

/// One line of a penalty sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha_err: f64,
    pub alpha_inc: f64,
    pub label: String,
    pub mean: Option<Metrics>,
    pub sd: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const CSV_HEADER: [&str; 26] = [
    "row",
    "cell",
    "run",
    "seed",
    "alpha_err",
    "alpha_inc",
    "optimizer",
    "mode",
    "shots",
    "gradient_step",
    "learning_rate",
    "iterations",
    "minibatch_size",
    "test_p_suc",
    "test_p_err",
    "test_p_inc",
    "train_p_suc",
    "train_p_err",
    "train_p_inc",
    "final_j1",
    "final_j1_estimated",
    "final_j1_moving_average",
    "mean_fidelity",
    "runs",
    "error",
    "quantity",
];

pub const SWEEP_HEADER: [&str; 10] = [
    "alpha_err",
    "alpha_inc",
    "cell",
    "p_suc_mean",
    "p_err_mean",
    "p_inc_mean",
    "p_suc_sd",
    "p_err_sd",
    "p_inc_sd",
    "error",
];

pub const TRAJECTORY_HEADER: [&str; 6] = ["iteration", "j1_estimated", "j1_exact", "p_suc", "p_err", "p_inc"];

/// Shortest text that reads back as the 12-significant-digit value.
pub fn fmt_num(x: f64) -> String {
    format!("{}", round_sig(x))
}

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn optimizer_name(s: &CellSettings) -> String {
    serde_json::to_value(s.optimizer).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

impl ExperimentReport {
    pub fn sweep_rows(&self) -> Vec<SweepRow> {
        self.cells
            .iter()
            .map(|c| SweepRow {
                alpha_err: c.settings.alpha_err,
                alpha_inc: c.settings.alpha_inc,
                label: c.label.clone(),
                mean: c.aggregate.as_ref().map(|a| a.test_mean),
                sd: c.aggregate.as_ref().map(|a| a.test_sd),
                error: c.error.clone(),
            })
            .collect()
    }

    pub fn cell(&self, label: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.label == label)
    }

    /// Run rows, then `mean` and `sd` rows per cell. The `quantity` column
    /// says rates are prior-weighted and costs are unweighted.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Format { path: "<csv>".into(), message: e.to_string() };
        out.write_record(CSV_HEADER).map_err(io)?;
        for cell in &self.cells {
            let s = &cell.settings;
            let (mode, shots) = match s.mode {
                EvalMode::Exact => ("exact", String::new()),
                EvalMode::Sampled { shots } => ("sampled", shots.to_string()),
            };
            let common = |row: &str, run: String, seed: String| -> Vec<String> {
                vec![
                    row.into(),
                    cell.label.clone(),
                    run,
                    seed,
                    fmt_num(s.alpha_err),
                    fmt_num(s.alpha_inc),
                    optimizer_name(s),
                    mode.into(),
                    shots.clone(),
                    fmt_num(s.gradient_step),
                    fmt_num(s.learning_rate),
                    s.iterations.to_string(),
                    s.minibatch_size.to_string(),
                ]
            };
            let tail = |m: &Metrics, t: &Metrics, j: [f64; 3], fid: Option<f64>, runs: String, err: String| {
                let mut v: Vec<String> =
                    [m.p_suc, m.p_err, m.p_inc, t.p_suc, t.p_err, t.p_inc, j[0], j[1], j[2]].map(fmt_num).to_vec();
                v.extend([opt_num(fid), runs, err, "rates prior-weighted; j1 unweighted".to_string()]);
                v
            };
            for r in &cell.runs {
                let mut rec = common("run", r.run.to_string(), r.seed.to_string());
                rec.extend(tail(
                    &r.test,
                    &r.train,
                    [r.final_j1, r.final_j1_estimated, r.final_j1_moving_average],
                    r.mean_fidelity,
                    String::new(),
                    String::new(),
                ));
                out.write_record(&rec).map_err(io)?;
            }
            if let Some(a) = &cell.aggregate {
                let n = a.runs.to_string();
                let j = |f: fn(&Stat) -> f64| [f(&a.final_j1), f(&a.final_j1_estimated), f(&a.final_j1_moving_average)];
                let mut rec = common("mean", String::new(), String::new());
                rec.extend(tail(&a.test_mean, &a.train_mean, j(|s| s.mean), a.mean_fidelity, n.clone(), String::new()));
                out.write_record(&rec).map_err(io)?;
                let mut rec = common("sd", String::new(), String::new());
                rec.extend(tail(&a.test_sd, &a.train_sd, j(|s| s.sd), None, n, String::new()));
                out.write_record(&rec).map_err(io)?;
            }
            if let Some(e) = &cell.error {
                let mut rec = common("error", String::new(), String::new());
                rec.extend(std::iter::repeat_n(String::new(), CSV_HEADER.len() - 13));
                rec[24] = e.clone();
                out.write_record(&rec).map_err(io)?;
            }
        }
        out.flush().map_err(|e| Error::Format { path: "<csv>".into(), message: e.to_string() })?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| Error::Format { path: "<json>".into(), message: e.to_string() })?;
        writeln!(w).map_err(|source| Error::Io { path: "<json>".into(), source })
    }

    pub fn write<W: Write>(&self, w: W, format: ExportFormat) -> Result<()> {
        match format {
            ExportFormat::Csv => self.write_csv(w),
            ExportFormat::Json => self.write_json(w),
        }
    }
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format { message, .. } => Error::Format { path: path.into(), message },
        Error::Io { source, .. } => Error::Io { path: path.into(), source },
        e => e,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
    }
    let f = std::fs::File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
    Ok(std::io::BufWriter::new(f))
}

pub fn export_report(report: &ExperimentReport, path: &Path, format: ExportFormat) -> Result<()> {
    let mut w = create(path)?;
    with_path(path, report.write(&mut w, format))?;
    w.flush().map_err(|source| Error::Io { path: path.into(), source })
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.into(), message: e.to_string() })
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], w: W, format: ExportFormat) -> Result<()> {
    let fmt_err = |m: String| Error::Format { path: "<sweep>".into(), message: m };
    match format {
        ExportFormat::Json => {
            let mut w = w;
            serde_json::to_writer_pretty(&mut w, rows).map_err(|e| fmt_err(e.to_string()))?;
            writeln!(w).map_err(|e| fmt_err(e.to_string()))
        }
        ExportFormat::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(SWEEP_HEADER).map_err(|e| fmt_err(e.to_string()))?;
            for r in rows {
                let m = |x: Option<Metrics>, f: fn(&Metrics) -> f64| x.as_ref().map(f).map(fmt_num).unwrap_or_default();
                out.write_record([
                    fmt_num(r.alpha_err),
                    fmt_num(r.alpha_inc),
                    r.label.clone(),
                    m(r.mean, |x| x.p_suc),
                    m(r.mean, |x| x.p_err),
                    m(r.mean, |x| x.p_inc),
                    m(r.sd, |x| x.p_suc),
                    m(r.sd, |x| x.p_err),
                    m(r.sd, |x| x.p_inc),
                    r.error.clone().unwrap_or_default(),
                ])
                .map_err(|e| fmt_err(e.to_string()))?;
            }
            out.flush().map_err(|e| fmt_err(e.to_string()))
        }
    }
}

pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], w: W) -> Result<()> {
    let fmt_err = |e: csv::Error| Error::Format { path: "<trajectory>".into(), message: e.to_string() };
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_HEADER).map_err(fmt_err)?;
    for p in points {
        let nums = [p.j1_estimated, p.j1_exact, p.metrics.p_suc, p.metrics.p_err, p.metrics.p_inc].map(fmt_num);
        let mut rec = vec![p.iteration.to_string()];
        rec.extend(nums);
        out.write_record(&rec).map_err(fmt_err)?;
    }
    out.flush().map_err(|e| Error::Format { path: "<trajectory>".into(), message: e.to_string() })
}

/// A single training run with the exact configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub config: TrainConfig,
    pub result: TrainResult,
}

impl TrainRecord {
    pub fn write<W: Write>(&self, mut w: W, format: ExportFormat) -> Result<()> {
        match format {
            ExportFormat::Csv => write_trajectory_csv(&self.result.trajectory, w),
            ExportFormat::Json => {
                serde_json::to_writer_pretty(&mut w, self)
                    .map_err(|e| Error::Format { path: "<json>".into(), message: e.to_string() })?;
                writeln!(w).map_err(|source| Error::Io { path: "<json>".into(), source })
            }
        }
    }

    pub fn export(&self, path: &Path, format: ExportFormat) -> Result<()> {
        let mut w = create(path)?;
        with_path(path, self.write(&mut w, format))?;
        w.flush().map_err(|source| Error::Io { path: path.into(), source })
    }
}
