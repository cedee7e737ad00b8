//! Declarative experiments: repeated seeded training runs and their reports.

mod report;
mod spec;
pub mod stats;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrimination::{mean_cross_fidelity, Ensemble, EnsembleMember, Family, ParamDistribution};
use crate::error::{Error, Result};
use crate::training::{train, CostConfig, EvalMode, OptimizerKind, TrainConfig, TrainResult};

pub use report::{
    export_report, fmt_num, load_report, round_sig, write_sweep, write_trajectory_csv, Aggregate, CellReport,
    ExperimentReport, ExportFormat, RunRecord, Stat, SweepRow, TrainRecord, CSV_HEADER, SWEEP_HEADER,
    TRAJECTORY_HEADER,
};
pub use spec::{ExperimentSpec, NamedDistribution, Task, TrainingOptions};

/// Trailing window for the smoothed final cost.
pub const MOVING_AVERAGE_WINDOW: usize = 500;

/// Deterministic, well-mixed seed for `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(index))
}

const DATA_STREAM: u64 = 0xDA7A;

/// How one list of parameter samples is produced.
#[derive(Debug, Clone, PartialEq)]
enum SampleSet {
    Even { lo: f64, hi: f64, n: usize },
    Draw { dist: ParamDistribution, n: usize },
    Fixed(Vec<f64>),
}

impl SampleSet {
    fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            SampleSet::Even { lo, hi, n } => {
                if *n == 1 {
                    return vec![(lo + hi) / 2.0];
                }
                (0..*n).map(|i| lo + (hi - lo) * i as f64 / (*n - 1) as f64).collect()
            }
            SampleSet::Draw { dist, n } => (0..*n).map(|_| dist.sample(rng)).collect(),
            SampleSet::Fixed(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DataPlan {
    a_train: SampleSet,
    a_test: SampleSet,
    b_train: SampleSet,
    b_test: SampleSet,
    /// Report the mean cross-class fidelity of the test inputs.
    fidelity: bool,
}

/// Everything that distinguishes one cell of an experiment from another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSettings {
    pub alpha_err: f64,
    pub alpha_inc: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub gradient_step: f64,
    pub mode: EvalMode,
    pub iterations: usize,
    pub minibatch_size: usize,
}

#[derive(Debug, Clone)]
struct Cell {
    label: String,
    settings: CellSettings,
    data: DataPlan,
}

fn join(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_string(),
        (_, true) => a.to_string(),
        _ => format!("{a}, {b}"),
    }
}

fn plan_cells(task: &Task, base: &CellSettings) -> Vec<Cell> {
    let fixed_b = |b: f64| SampleSet::Fixed(vec![b]);
    let uniform = |n| SampleSet::Draw { dist: ParamDistribution::Uniform { lo: 0.0, hi: 1.0 }, n };
    match task {
        Task::CenteredA0 { a0, std_dev, train_points, b } => vec![Cell {
            label: format!("a0={a0}"),
            settings: base.clone(),
            data: DataPlan {
                a_train: SampleSet::Draw {
                    dist: ParamDistribution::TruncatedNormal { mean: *a0, std_dev: *std_dev },
                    n: *train_points,
                },
                a_test: SampleSet::Fixed(vec![*a0]),
                b_train: fixed_b(*b),
                b_test: fixed_b(*b),
                fidelity: false,
            },
        }],
        Task::FullRange { train_points, test_points, b } => vec![Cell {
            label: "train [0, 1]".into(),
            settings: base.clone(),
            data: DataPlan {
                a_train: SampleSet::Even { lo: 0.0, hi: 1.0, n: *train_points },
                a_test: uniform(*test_points),
                b_train: fixed_b(*b),
                b_test: fixed_b(*b),
                fidelity: false,
            },
        }],
        Task::Generalization { train_lo, train_hi, train_points, test_points, b, reference } => {
            let mut ranges = vec![(*train_lo, *train_hi)];
            if *reference {
                ranges.push((0.0, 1.0));
            }
            ranges
                .into_iter()
                .map(|(lo, hi)| Cell {
                    label: format!("train [{lo}, {hi}]"),
                    settings: base.clone(),
                    data: DataPlan {
                        a_train: SampleSet::Even { lo, hi, n: *train_points },
                        a_test: uniform(*test_points),
                        b_train: fixed_b(*b),
                        b_test: fixed_b(*b),
                        fidelity: false,
                    },
                })
                .collect()
        }
        Task::DistributionClassification { distributions, train_points, test_points } => {
            let mut cells = Vec::new();
            for da in distributions {
                for db in distributions {
                    cells.push(Cell {
                        label: format!("a~{} b~{}", da.name, db.name),
                        settings: base.clone(),
                        data: DataPlan {
                            a_train: SampleSet::Draw { dist: da.dist.clone(), n: *train_points },
                            a_test: SampleSet::Draw { dist: da.dist.clone(), n: *test_points },
                            b_train: SampleSet::Draw { dist: db.dist.clone(), n: *train_points },
                            b_test: SampleSet::Draw { dist: db.dist.clone(), n: *test_points },
                            fidelity: true,
                        },
                    });
                }
            }
            cells
        }
        Task::PenaltySweep { grid, base: inner } => grid
            .iter()
            .flat_map(|&[alpha_err, alpha_inc]| {
                let s = CellSettings { alpha_err, alpha_inc, ..base.clone() };
                plan_cells(inner, &s).into_iter().map(move |mut c| {
                    c.label = join(&c.label, &format!("alpha_err={alpha_err} alpha_inc={alpha_inc}"));
                    c
                })
            })
            .collect(),
        Task::ShotConvergence { shots, gradient_steps, learning_rates, exact_reference, base: inner } => {
            let rates = if learning_rates.is_empty() { vec![base.learning_rate] } else { learning_rates.clone() };
            let mut modes: Vec<EvalMode> = shots.iter().map(|&shots| EvalMode::Sampled { shots }).collect();
            if *exact_reference {
                modes.push(EvalMode::Exact);
            }
            let mut cells = Vec::new();
            for &gradient_step in gradient_steps {
                for &learning_rate in &rates {
                    for &mode in &modes {
                        let s = CellSettings { gradient_step, learning_rate, mode, ..base.clone() };
                        let mode_label = match mode {
                            EvalMode::Exact => "exact".to_string(),
                            EvalMode::Sampled { shots } => format!("shots={shots}"),
                        };
                        let mut label = format!("{mode_label} step={gradient_step}");
                        if !learning_rates.is_empty() {
                            label = format!("{label} lr={learning_rate}");
                        }
                        for mut c in plan_cells(inner, &s) {
                            c.label = join(&c.label, &label);
                            cells.push(c);
                        }
                    }
                }
            }
            cells
        }
        Task::OptimizerComparison { optimizers, base: inner } => optimizers
            .iter()
            .flat_map(|&optimizer| {
                let s = CellSettings { optimizer, ..base.clone() };
                plan_cells(inner, &s).into_iter().map(move |mut c| {
                    let name = serde_json::to_value(optimizer).expect("enum").as_str().unwrap_or("").to_string();
                    c.label = join(&c.label, &name);
                    c
                })
            })
            .collect(),
    }
}

fn base_settings(spec: &ExperimentSpec) -> CellSettings {
    let t = &spec.training;
    CellSettings {
        alpha_err: spec.cost.alpha_err,
        alpha_inc: spec.cost.alpha_inc,
        optimizer: t.optimizer.unwrap_or(OptimizerKind::Adam),
        learning_rate: t.hyper.learning_rate,
        gradient_step: t.gradient_step.unwrap_or_else(|| spec.task.default_gradient_step()),
        mode: t.mode.unwrap_or_default(),
        iterations: t.iterations.unwrap_or(5000),
        minibatch_size: t.minibatch_size.unwrap_or(50),
    }
}

fn ensemble(prior1: f64, a: Vec<f64>, b: Vec<f64>) -> Ensemble {
    Ensemble {
        members: vec![
            EnsembleMember { family: Family::Psi1, prior: prior1, samples: a },
            EnsembleMember { family: Family::Psi23, prior: 1.0 - prior1, samples: b },
        ],
    }
}

/// The concrete training configuration of one run of one cell.
/// Test-set parameters of both classes, kept for the fidelity summary.
type FidelitySets = Option<(Vec<f64>, Vec<f64>)>;

fn run_config(spec: &ExperimentSpec, cell: &Cell, run: usize) -> (TrainConfig, FidelitySets) {
    let seed = derive_seed(spec.seed, run as u64);
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DATA_STREAM));
    let d = &cell.data;
    let a_train = d.a_train.realize(&mut data_rng);
    let a_test = d.a_test.realize(&mut data_rng);
    let b_train = d.b_train.realize(&mut data_rng);
    let b_test = d.b_test.realize(&mut data_rng);
    let s = &cell.settings;
    let largest = a_train.len().max(b_train.len());
    let fidelity_sets = d.fidelity.then(|| (a_test.clone(), b_test.clone()));
    let mut hyper = spec.training.hyper;
    hyper.learning_rate = s.learning_rate;
    let config = TrainConfig {
        cost: CostConfig { alpha_err: s.alpha_err, alpha_inc: s.alpha_inc, scale: spec.cost.scale },
        ensemble: ensemble(spec.class1_prior, a_train, b_train),
        test: Some(ensemble(spec.class1_prior, a_test, b_test)),
        assignment: spec.training.assignment,
        optimizer: s.optimizer,
        hyper,
        minibatch_size: s.minibatch_size.min(largest),
        gradient_step: s.gradient_step,
        max_iterations: s.iterations,
        seed,
        mode: s.mode,
    };
    (config, fidelity_sets)
}

/// Training configuration for run `run` of the first cell, as `train` uses it.
pub fn first_run_config(spec: &ExperimentSpec, run: usize) -> Result<TrainConfig> {
    spec.validate()?;
    let cells = plan_cells(&spec.task, &base_settings(spec));
    let (config, _) = run_config(spec, &cells[0], run);
    config.validate()?;
    Ok(config)
}

fn run_one(spec: &ExperimentSpec, cell: &Cell, run: usize) -> Result<RunRecord> {
    let (config, fidelity_sets) = run_config(spec, cell, run);
    let result: TrainResult = train(&config).map_err(|e| e.source)?;
    let mean_fidelity = fidelity_sets.map(|(a, b)| mean_cross_fidelity(&a, &b)).transpose()?;
    Ok(RunRecord::new(run, &result, mean_fidelity))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(vec![format!("jobs: {e}")]))
}

/// Runs every cell `spec.repetitions` times on `jobs` worker threads.
/// A failing cell keeps its error and the remaining cells still complete.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentReport> {
    spec.validate()?;
    let cells = plan_cells(&spec.task, &base_settings(spec));
    for cell in &cells {
        let (config, _) = run_config(spec, cell, 0);
        config.validate().map_err(|e| match e {
            Error::Config(items) => Error::Config(items.into_iter().map(|i| format!("{}: {i}", cell.label)).collect()),
            e => e,
        })?;
    }
    let work: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..spec.repetitions).map(move |r| (c, r))).collect();
    let outcomes: Vec<Result<RunRecord>> =
        pool(jobs)?.install(|| work.par_iter().map(|&(c, r)| run_one(spec, &cells[c], r)).collect());

    let mut outcomes = outcomes.into_iter();
    let cell_reports = cells
        .iter()
        .map(|cell| {
            let runs: Vec<Result<RunRecord>> = outcomes.by_ref().take(spec.repetitions).collect();
            CellReport::assemble(cell.label.clone(), cell.settings.clone(), runs)
        })
        .collect();
    Ok(ExperimentReport {
        name: spec.display_name().to_string(),
        kind: spec.task.kind().to_string(),
        seed: spec.seed,
        repetitions: spec.repetitions,
        seeds: (0..spec.repetitions).map(|r| derive_seed(spec.seed, r as u64)).collect(),
        spec: spec.clone(),
        cells: cell_reports,
    })
}

/// One experiment per `(alpha_err, alpha_inc)` point on the data task of `base`.
pub fn sweep_penalties(grid: &[(f64, f64)], base: &ExperimentSpec, jobs: usize) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config(vec!["grid: empty".into()]));
    }
    let mut spec = base.clone();
    spec.task =
        Task::PenaltySweep { grid: grid.iter().map(|&(e, i)| [e, i]).collect(), base: Box::new(base.task.clone()) };
    Ok(run_experiment(&spec, jobs)?.sweep_rows())
}
