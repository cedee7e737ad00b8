//! Cost function, finite-difference gradients and the training loop.

mod optimizer;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrimination::{Ensemble, EnsembleMember, Metrics, OutcomeAssignment};
use crate::error::{Error, Result};
use crate::povm::{effects_with_shifts, CircuitParams, Effects, NUM_PARAMS};
use crate::sampling::sampled_sample_metrics;

pub use optimizer::{optimizer_step, Hyperparams, OptimizerKind, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub alpha_err: f64,
    pub alpha_inc: f64,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl CostConfig {
    pub fn new(alpha_err: f64, alpha_inc: f64) -> Self {
        Self { alpha_err, alpha_inc, scale: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_err", self.alpha_err), ("alpha_inc", self.alpha_inc)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain { name, value: v, domain: "[0, ∞)" });
            }
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Domain { name: "scale", value: self.scale, domain: "(0, ∞)" });
        }
        Ok(())
    }

    /// Unscaled loss of one sample.
    pub fn loss(&self, m: &Metrics) -> f64 {
        (1.0 - m.p_suc) + self.alpha_err * m.p_err + self.alpha_inc * m.p_inc
    }
}

/// How probabilities inside the cost are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Exact,
    /// Fresh `shots` measurements per sample at every cost evaluation.
    Sampled { shots: u64 },
}

/// Sample indices per ensemble member.
type Batch = Vec<Vec<usize>>;

fn full_batch(ensemble: &Ensemble) -> Batch {
    ensemble.members.iter().map(|m| (0..m.samples.len()).collect()).collect()
}

/// Draws `size` indices with replacement from each member. Members with no
/// more than `size` samples contribute their whole set.
fn draw_batch<R: Rng + ?Sized>(ensemble: &Ensemble, size: usize, rng: &mut R) -> Batch {
    ensemble
        .members
        .iter()
        .map(|m| {
            let n = m.samples.len();
            if size >= n {
                (0..n).collect()
            } else {
                (0..size).map(|_| rng.random_range(0..n)).collect()
            }
        })
        .collect()
}

fn batch_cost_with<F>(ensemble: &Ensemble, batch: &Batch, cost: &CostConfig, mut rates: F) -> f64
where
    F: FnMut(&EnsembleMember, f64) -> Metrics,
{
    let mut total = 0.0;
    for (member, idx) in ensemble.members.iter().zip(batch) {
        let mut sum = 0.0;
        for &i in idx {
            sum += cost.loss(&rates(member, member.samples[i]));
        }
        total += sum / idx.len() as f64;
    }
    cost.scale * total
}

fn batch_cost<R: Rng + ?Sized>(
    effects: &Effects,
    ensemble: &Ensemble,
    batch: &Batch,
    cost: &CostConfig,
    assignment: &OutcomeAssignment,
    mode: EvalMode,
    rng: &mut R,
) -> f64 {
    match mode {
        EvalMode::Exact => batch_cost_with(ensemble, batch, cost, |m, a| m.sample_metrics(effects, a, assignment)),
        EvalMode::Sampled { shots } => {
            batch_cost_with(ensemble, batch, cost, |m, a| sampled_sample_metrics(rng, effects, m, a, assignment, shots))
        }
    }
}

fn check_params(params: &[f64]) -> Result<()> {
    if params.len() != NUM_PARAMS {
        return Err(Error::Shape { expected: NUM_PARAMS, got: params.len() });
    }
    Ok(())
}

/// `scale · Σ_i mean_{a∈S_i} [(1 − P_suc) + α_err·P_err + α_inc·P_inc]`.
/// Families are summed without prior weights.
pub fn cost_j1(params: &[f64], ensemble: &Ensemble, cost: &CostConfig, assignment: &OutcomeAssignment) -> Result<f64> {
    check_params(params)?;
    ensemble.validate()?;
    let effects = Effects::for_params(params);
    Ok(cost_with_effects(&effects, ensemble, cost, assignment))
}

/// [`cost_j1`] from precomputed effects, with no validation.
pub fn cost_with_effects(
    effects: &Effects,
    ensemble: &Ensemble,
    cost: &CostConfig,
    assignment: &OutcomeAssignment,
) -> f64 {
    batch_cost_with(ensemble, &full_batch(ensemble), cost, |m, a| m.sample_metrics(effects, a, assignment))
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain { name: "gradient_step", value: step, domain: "(0, ∞)" });
    }
    Ok(())
}

fn finite(value: f64, component: Option<usize>) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric { component, value })
    }
}

/// `(f(x + step·e_j) − f(x)) / step` for every `j`, using `len + 1` calls.
pub fn forward_diff_gradient<F>(mut f: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    check_step(step)?;
    let base = finite(f(params), None)?;
    let mut x = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for j in 0..params.len() {
        x[j] = params[j] + step;
        let fj = finite(f(&x), Some(j))?;
        x[j] = params[j];
        grad.push((fj - base) / step);
    }
    Ok(grad)
}

/// Forward-difference gradient of the cost restricted to a random minibatch.
///
/// Returns the gradient and the minibatch cost at `params`.
#[allow(clippy::too_many_arguments)]
pub fn minibatch_gradient<R: Rng + ?Sized>(
    params: &[f64],
    ensemble: &Ensemble,
    cost: &CostConfig,
    assignment: &OutcomeAssignment,
    minibatch_size: usize,
    step: f64,
    rng: &mut R,
    mode: EvalMode,
) -> Result<(Vec<f64>, f64)> {
    check_params(params)?;
    check_step(step)?;
    if minibatch_size == 0 {
        return Err(Error::Domain { name: "minibatch_size", value: 0.0, domain: "[1, ∞)" });
    }
    let batch = draw_batch(ensemble, minibatch_size, rng);
    let (base, shifted) = effects_with_shifts(params, step);
    let f0 = finite(batch_cost(&base, ensemble, &batch, cost, assignment, mode, rng), None)?;
    let mut grad = Vec::with_capacity(NUM_PARAMS);
    for (j, e) in shifted.iter().enumerate() {
        let fj = finite(batch_cost(e, ensemble, &batch, cost, assignment, mode, rng), Some(j))?;
        grad.push((fj - f0) / step);
    }
    Ok((grad, f0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub cost: CostConfig,
    /// Training sample sets.
    pub ensemble: Ensemble,
    /// Held-out sample sets scored after training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<Ensemble>,
    #[serde(default)]
    pub assignment: OutcomeAssignment,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub hyper: Hyperparams,
    pub minibatch_size: usize,
    pub gradient_step: f64,
    pub max_iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: EvalMode,
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

impl TrainConfig {
    /// Collects every violated constraint, each prefixed by its field path.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |path: &str, r: Result<()>| {
            if let Err(e) = r {
                errs.push(format!("{path}: {e}"));
            }
        };
        check("cost", self.cost.validate());
        check("ensemble", self.ensemble.validate());
        if let Some(t) = &self.test {
            check("test", t.validate());
        }
        check("hyper", self.hyper.validate());
        check("gradient_step", check_step(self.gradient_step));
        let largest = self.ensemble.members.iter().map(|m| m.samples.len()).max().unwrap_or(0);
        if self.minibatch_size == 0 || self.minibatch_size > largest.max(1) {
            errs.push(format!("minibatch_size: {} outside [1, {largest}] (training-set size)", self.minibatch_size));
        }
        if let EvalMode::Sampled { shots: 0 } = self.mode {
            errs.push("mode.shots: must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Number of completed optimizer steps.
    pub iteration: usize,
    /// Cost as the training process sees it: exact, or shot-estimated in sampled mode.
    pub j1_estimated: f64,
    pub j1_exact: f64,
    /// Prior-weighted rates on the training set.
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub seed: u64,
    pub initial_params: CircuitParams,
    pub final_params: CircuitParams,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Prior-weighted rates on the training set.
    pub train_metrics: Metrics,
    /// Prior-weighted rates on the test set, when one is configured.
    pub test_metrics: Option<Metrics>,
    /// Exact cost at the final parameters.
    pub final_j1: f64,
    /// Not serialized so that exported reports are reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// A failed run, with whatever was computed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{source}")]
pub struct TrainError {
    #[source]
    pub source: Error,
    pub partial: Option<Box<TrainResult>>,
}

impl From<Error> for TrainError {
    fn from(source: Error) -> Self {
        Self { source, partial: None }
    }
}

pub fn train(config: &TrainConfig) -> std::result::Result<TrainResult, TrainError> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = CircuitParams::random(&mut rng);
    let mut params = initial.clone().into_vec();
    let mut opt = OptimizerState::new(config.optimizer, config.hyper, NUM_PARAMS);
    let mut trajectory = Vec::with_capacity(config.max_iterations);

    let mut outcome = Ok(());
    for it in 1..=config.max_iterations {
        let step = minibatch_gradient(
            &params,
            &config.ensemble,
            &config.cost,
            &config.assignment,
            config.minibatch_size,
            config.gradient_step,
            &mut rng,
            config.mode,
        )
        .and_then(|(grad, _)| opt.step(&mut params, &grad))
        .and_then(|()| record(config, &params, it, &mut rng));
        match step {
            Ok(point) => trajectory.push(point),
            Err(e) => {
                outcome = Err(e);
                break;
            }
        }
    }

    let summary = summarize(config, &params);
    let result = |summary: Option<(Metrics, Option<Metrics>, f64)>| {
        let (train_metrics, test_metrics, final_j1) = summary.unwrap_or((Metrics::default(), None, f64::NAN));
        TrainResult {
            seed: config.seed,
            initial_params: initial.clone(),
            final_params: CircuitParams::new(params.clone()).expect("length is fixed"),
            trajectory: trajectory.clone(),
            train_metrics,
            test_metrics,
            final_j1,
            wall_time_s: start.elapsed().as_secs_f64(),
        }
    };
    match (outcome, summary) {
        (Ok(()), Ok(s)) => Ok(result(Some(s))),
        (Err(source), s) => Err(TrainError { source, partial: Some(Box::new(result(s.ok()))) }),
        (Ok(()), Err(source)) => Err(TrainError { source, partial: Some(Box::new(result(None))) }),
    }
}

fn record<R: Rng + ?Sized>(
    config: &TrainConfig,
    params: &[f64],
    iteration: usize,
    rng: &mut R,
) -> Result<TrajectoryPoint> {
    let effects = Effects::for_params(params);
    let j1_exact = finite(cost_with_effects(&effects, &config.ensemble, &config.cost, &config.assignment), None)?;
    let j1_estimated = match config.mode {
        EvalMode::Exact => j1_exact,
        mode @ EvalMode::Sampled { .. } => {
            let batch = full_batch(&config.ensemble);
            finite(batch_cost(&effects, &config.ensemble, &batch, &config.cost, &config.assignment, mode, rng), None)?
        }
    };
    let metrics = config.ensemble.metrics_with_effects(&effects, &config.assignment)?;
    Ok(TrajectoryPoint { iteration, j1_estimated, j1_exact, metrics })
}

fn summarize(config: &TrainConfig, params: &[f64]) -> Result<(Metrics, Option<Metrics>, f64)> {
    let effects = Effects::for_params(params);
    let train = config.ensemble.metrics_with_effects(&effects, &config.assignment)?;
    let test = config.test.as_ref().map(|t| t.metrics_with_effects(&effects, &config.assignment)).transpose()?;
    let j1 = finite(cost_with_effects(&effects, &config.ensemble, &config.cost, &config.assignment), None)?;
    Ok((train, test, j1))
}
