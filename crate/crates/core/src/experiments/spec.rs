use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discrimination::{OutcomeAssignment, ParamDistribution};
use crate::error::{Error, Result};
use crate::training::{CostConfig, EvalMode, Hyperparams, OptimizerKind};

/// A declarative experiment: what to train on, how, and how often.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Prior of the pure class; the mixed class gets the rest.
    #[serde(default = "third")]
    pub class1_prior: f64,
    pub cost: CostConfig,
    #[serde(default)]
    pub training: TrainingOptions,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn third() -> f64 {
    1.0 / 3.0
}

/// Unset fields fall back to the defaults of the task kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minibatch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<EvalMode>,
    #[serde(default)]
    pub assignment: OutcomeAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDistribution {
    pub name: String,
    #[serde(flatten)]
    pub dist: ParamDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// Training data drawn around `a0`, tested on `a0` alone.
    CenteredA0 {
        a0: f64,
        #[serde(default = "centered_sd")]
        std_dev: f64,
        #[serde(default = "train_points")]
        train_points: usize,
        #[serde(default = "mixed_b")]
        b: f64,
    },
    /// Evenly spaced training points on `[0, 1]`, uniform test points.
    FullRange {
        #[serde(default = "train_points")]
        train_points: usize,
        #[serde(default = "test_points")]
        test_points: usize,
        #[serde(default = "mixed_b")]
        b: f64,
    },
    /// Training on `[train_lo, train_hi]`, testing on `[0, 1]`; optionally
    /// alongside a full-range reference.
    Generalization {
        train_lo: f64,
        train_hi: f64,
        #[serde(default = "train_points")]
        train_points: usize,
        #[serde(default = "test_points")]
        test_points: usize,
        #[serde(default = "mixed_b")]
        b: f64,
        #[serde(default = "yes")]
        reference: bool,
    },
    /// Every pairing of a pure-class and a mixed-class parameter distribution.
    DistributionClassification {
        distributions: Vec<NamedDistribution>,
        #[serde(default = "train_points")]
        train_points: usize,
        #[serde(default = "test_points")]
        test_points: usize,
    },
    PenaltySweep {
        grid: Vec<[f64; 2]>,
        base: Box<Task>,
    },
    /// Shot-sampled training over a grid of shot counts, gradient steps and
    /// learning rates, with exact-probability references per step.
    ShotConvergence {
        shots: Vec<u64>,
        gradient_steps: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        learning_rates: Vec<f64>,
        #[serde(default = "yes")]
        exact_reference: bool,
        base: Box<Task>,
    },
    OptimizerComparison {
        #[serde(default = "all_optimizers")]
        optimizers: Vec<OptimizerKind>,
        base: Box<Task>,
    },
}

fn centered_sd() -> f64 {
    0.01
}
fn train_points() -> usize {
    100
}
fn test_points() -> usize {
    150
}
fn mixed_b() -> f64 {
    FRAC_1_SQRT_2
}
fn yes() -> bool {
    true
}
fn all_optimizers() -> Vec<OptimizerKind> {
    vec![OptimizerKind::Adam, OptimizerKind::RmsProp, OptimizerKind::Sgd]
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::CenteredA0 { .. } => "centered_a0",
            Task::FullRange { .. } => "full_range",
            Task::Generalization { .. } => "generalization",
            Task::DistributionClassification { .. } => "distribution_classification",
            Task::PenaltySweep { .. } => "penalty_sweep",
            Task::ShotConvergence { .. } => "shot_convergence",
            Task::OptimizerComparison { .. } => "optimizer_comparison",
        }
    }

    /// The task that supplies the data.
    pub fn data_task(&self) -> &Task {
        match self {
            Task::PenaltySweep { base, .. }
            | Task::ShotConvergence { base, .. }
            | Task::OptimizerComparison { base, .. } => base.data_task(),
            t => t,
        }
    }

    /// Size of the largest training family.
    pub fn train_points(&self) -> usize {
        match self.data_task() {
            Task::CenteredA0 { train_points, .. }
            | Task::FullRange { train_points, .. }
            | Task::Generalization { train_points, .. }
            | Task::DistributionClassification { train_points, .. } => *train_points,
            _ => unreachable!("wrappers resolve to a data task"),
        }
    }

    /// Forward-difference step used when the config does not set one.
    pub fn default_gradient_step(&self) -> f64 {
        match self.data_task() {
            Task::CenteredA0 { .. } => 1e-6,
            _ => 1e-3,
        }
    }

    fn validate(&self, path: &str, errs: &mut Vec<String>) {
        let mut unit = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("{path}.{name}: {v} outside [0, 1]"));
            }
        };
        match self {
            Task::CenteredA0 { a0, std_dev, train_points, b } => {
                unit("a0", *a0);
                unit("b", *b);
                if !(*std_dev > 0.0) {
                    errs.push(format!("{path}.std_dev: must be positive"));
                }
                positive(errs, path, "train_points", *train_points);
            }
            Task::FullRange { train_points, test_points, b } => {
                unit("b", *b);
                positive(errs, path, "train_points", *train_points);
                positive(errs, path, "test_points", *test_points);
            }
            Task::Generalization { train_lo, train_hi, train_points, test_points, b, .. } => {
                unit("train_lo", *train_lo);
                unit("train_hi", *train_hi);
                unit("b", *b);
                if train_lo > train_hi {
                    errs.push(format!("{path}.train_lo: exceeds train_hi"));
                }
                positive(errs, path, "train_points", *train_points);
                positive(errs, path, "test_points", *test_points);
            }
            Task::DistributionClassification { distributions, train_points, test_points } => {
                if distributions.is_empty() {
                    errs.push(format!("{path}.distributions: empty"));
                }
                for (i, d) in distributions.iter().enumerate() {
                    if let Err(e) = d.dist.validate() {
                        errs.push(format!("{path}.distributions[{i}]: {e}"));
                    }
                }
                positive(errs, path, "train_points", *train_points);
                positive(errs, path, "test_points", *test_points);
            }
            Task::PenaltySweep { grid, base } => {
                if grid.is_empty() {
                    errs.push(format!("{path}.grid: empty"));
                }
                for (i, [e, n]) in grid.iter().enumerate() {
                    if let Err(err) = CostConfig::new(*e, *n).validate() {
                        errs.push(format!("{path}.grid[{i}]: {err}"));
                    }
                }
                base.validate(&format!("{path}.base"), errs);
            }
            Task::ShotConvergence { shots, gradient_steps, learning_rates, base, .. } => {
                if shots.is_empty() || shots.contains(&0) {
                    errs.push(format!("{path}.shots: need at least one positive shot count"));
                }
                if gradient_steps.is_empty() || gradient_steps.iter().any(|s| !(*s > 0.0)) {
                    errs.push(format!("{path}.gradient_steps: need at least one positive step"));
                }
                if learning_rates.iter().any(|s| !(*s > 0.0)) {
                    errs.push(format!("{path}.learning_rates: must be positive"));
                }
                base.validate(&format!("{path}.base"), errs);
            }
            Task::OptimizerComparison { optimizers, base } => {
                if optimizers.is_empty() {
                    errs.push(format!("{path}.optimizers: empty"));
                }
                base.validate(&format!("{path}.base"), errs);
            }
        }
    }
}

fn positive(errs: &mut Vec<String>, path: &str, name: &str, v: usize) {
    if v == 0 {
        errs.push(format!("{path}.{name}: must be at least 1"));
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<inline>"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let spec: Self = toml::from_str(text)
            .map_err(|e| Error::Format { path: path.into(), message: e.to_string().trim_end().to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("specs are representable in TOML")
    }

    /// Collects every problem, each prefixed by its field path.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.repetitions == 0 {
            errs.push("repetitions: must be at least 1".to_string());
        }
        if !(self.class1_prior > 0.0 && self.class1_prior < 1.0) {
            errs.push(format!("class1_prior: {} outside (0, 1)", self.class1_prior));
        }
        if let Err(e) = self.cost.validate() {
            errs.push(format!("cost: {e}"));
        }
        let t = &self.training;
        match t.minibatch_size {
            Some(0) => errs.push("training.minibatch_size: must be at least 1".into()),
            Some(n) if n > self.task.train_points() && self.task.train_points() > 0 => errs
                .push(format!("training.minibatch_size: {n} exceeds the {} training points", self.task.train_points())),
            _ => {}
        }
        if let Some(s) = t.gradient_step {
            if !(s > 0.0 && s.is_finite()) {
                errs.push(format!("training.gradient_step: {s} must be positive"));
            }
        }
        if let Err(e) = t.hyper.validate() {
            errs.push(format!("training.hyper: {e}"));
        }
        if let Some(EvalMode::Sampled { shots: 0 }) = t.mode {
            errs.push("training.mode.shots: must be at least 1".into());
        }
        self.task.validate("task", &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn display_name(&self) -> &str {
        if self.name.is_empty() {
            self.task.kind()
        } else {
            &self.name
        }
    }
}
