//! Input families, outcome labelling and success/error/inconclusive rates.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::povm::{self, DiscriminatorCircuit, Effects, Outcome};
use crate::simulator::{self, StateVector};

/// Tolerance on `Σ λ_i = 1` and on mixture weights.
pub const PRIOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `(√(1−a²), 0, a, 0)`.
    Psi1,
    /// `(0, ±√(1−b²), b, 0)`, an equal mixture of both signs.
    Psi23,
}

impl Family {
    pub fn label(self) -> Label {
        match self {
            Family::Psi1 => Label::Class1,
            Family::Psi23 => Label::Class2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Class1,
    Class2,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain { name, value, domain: "[0, 1]" })
    }
}

fn psi1_amplitudes(a: f64) -> [f64; 4] {
    [(1.0 - a * a).max(0.0).sqrt(), 0.0, a, 0.0]
}

fn psi23_amplitudes(sign: Sign, b: f64) -> [f64; 4] {
    [0.0, sign.value() * (1.0 - b * b).max(0.0).sqrt(), b, 0.0]
}

pub fn psi1(a: f64) -> Result<StateVector> {
    check_unit("a", a)?;
    StateVector::from_real(&psi1_amplitudes(a))
}

pub fn psi23(sign: Sign, b: f64) -> Result<StateVector> {
    check_unit("b", b)?;
    StateVector::from_real(&psi23_amplitudes(sign, b))
}

/// Distribution of a family parameter; support is always inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamDistribution {
    Fixed {
        value: f64,
    },
    /// Normal with the given mean and standard deviation, conditioned on
    /// `[0, 1]` by rejection.
    TruncatedNormal {
        mean: f64,
        std_dev: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub dist: ParamDistribution,
}

impl ParamDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            ParamDistribution::Fixed { value } => check_unit("value", *value),
            ParamDistribution::TruncatedNormal { mean, std_dev } => {
                check_unit("mean", *mean)?;
                if !(std_dev.is_finite() && *std_dev > 0.0) {
                    return Err(Error::Domain { name: "std_dev", value: *std_dev, domain: "(0, ∞)" });
                }
                Ok(())
            }
            ParamDistribution::Uniform { lo, hi } => {
                check_unit("lo", *lo)?;
                check_unit("hi", *hi)?;
                if lo > hi {
                    return Err(Error::Domain { name: "lo", value: *lo, domain: "[0, hi]" });
                }
                Ok(())
            }
            ParamDistribution::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::Arity("mixture has no components".into()));
                }
                let mut total = 0.0;
                for c in components {
                    if !(c.weight > 0.0) {
                        return Err(Error::Domain { name: "weight", value: c.weight, domain: "(0, 1]" });
                    }
                    total += c.weight;
                    c.dist.validate()?;
                }
                if (total - 1.0).abs() > PRIOR_TOL {
                    return Err(Error::Domain { name: "mixture weight sum", value: total, domain: "{1}" });
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ParamDistribution::Fixed { value } => *value,
            ParamDistribution::TruncatedNormal { mean, std_dev } => {
                let normal = Normal::new(*mean, *std_dev).expect("validated std_dev");
                loop {
                    let x: f64 = normal.sample(rng);
                    if (0.0..=1.0).contains(&x) {
                        return x;
                    }
                }
            }
            ParamDistribution::Uniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    rng.random_range(*lo..=*hi)
                }
            }
            ParamDistribution::Mixture { components } => {
                let mut u: f64 = rng.random();
                for c in components {
                    if u < c.weight {
                        return c.dist.sample(rng);
                    }
                    u -= c.weight;
                }
                components.last().expect("non-empty mixture").dist.sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFamilySpec {
    pub family: Family,
    pub prior: f64,
    pub distribution: ParamDistribution,
}

impl StateFamilySpec {
    pub fn validate(&self) -> Result<()> {
        check_unit("prior", self.prior)?;
        self.distribution.validate()
    }
}

pub fn validate_priors<'a>(priors: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    let total: f64 = priors.into_iter().sum();
    if (total - 1.0).abs() > PRIOR_TOL {
        return Err(Error::Domain { name: "prior sum", value: total, domain: "{1}" });
    }
    Ok(())
}

/// Which class each ancilla outcome announces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AssignmentRepr", into = "AssignmentRepr")]
pub struct OutcomeAssignment {
    labels: [Label; 4],
}

impl Default for OutcomeAssignment {
    /// `m00`, `m10` → class 1; `m01` → class 2; `m11` → inconclusive.
    fn default() -> Self {
        let mut labels = [Label::Inconclusive; 4];
        labels[Outcome::M00.index()] = Label::Class1;
        labels[Outcome::M10.index()] = Label::Class1;
        labels[Outcome::M01.index()] = Label::Class2;
        labels[Outcome::M11.index()] = Label::Inconclusive;
        Self { labels }
    }
}

impl OutcomeAssignment {
    pub fn new(labels: [Label; 4]) -> Result<Self> {
        for class in [Label::Class1, Label::Class2] {
            if !labels.contains(&class) {
                return Err(Error::Config(vec![format!("assignment: no outcome announces {class:?}")]));
            }
        }
        Ok(Self { labels })
    }

    pub fn label(&self, outcome: Outcome) -> Label {
        self.labels[outcome.index()]
    }
}

#[derive(Serialize, Deserialize)]
struct AssignmentRepr {
    m00: Label,
    m01: Label,
    m10: Label,
    m11: Label,
}

impl TryFrom<AssignmentRepr> for OutcomeAssignment {
    type Error = Error;

    fn try_from(r: AssignmentRepr) -> Result<Self> {
        OutcomeAssignment::new([r.m00, r.m01, r.m10, r.m11])
    }
}

impl From<OutcomeAssignment> for AssignmentRepr {
    fn from(a: OutcomeAssignment) -> Self {
        AssignmentRepr { m00: a.labels[0], m01: a.labels[1], m10: a.labels[2], m11: a.labels[3] }
    }
}

/// Looks up an outcome given as `m01` or as the bare bitstring `01`.
pub fn classify_outcome(outcome: &str, assignment: &OutcomeAssignment) -> Result<Label> {
    let key = outcome.strip_prefix('m').unwrap_or(outcome);
    let parsed: Outcome = format!("m{key}").parse()?;
    Ok(assignment.label(parsed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInput {
    pub state: StateVector,
    pub true_label: Label,
    pub param: f64,
    /// Set for members of the mixed class.
    pub branch_sign: Option<Sign>,
}

impl LabeledInput {
    pub fn new(family: Family, param: f64, sign: Sign) -> Result<Self> {
        Ok(match family {
            Family::Psi1 => Self { state: psi1(param)?, true_label: Label::Class1, param, branch_sign: None },
            Family::Psi23 => {
                Self { state: psi23(sign, param)?, true_label: Label::Class2, param, branch_sign: Some(sign) }
            }
        })
    }
}

/// Draws a parameter and, for the mixed class, a fair sign.
pub fn sample_input<R: Rng + ?Sized>(spec: &StateFamilySpec, rng: &mut R) -> LabeledInput {
    let param = spec.distribution.sample(rng);
    let sign = match spec.family {
        Family::Psi1 => Sign::Plus,
        Family::Psi23 => {
            if rng.random_bool(0.5) {
                Sign::Plus
            } else {
                Sign::Minus
            }
        }
    };
    LabeledInput::new(spec.family, param, sign).expect("distribution support is inside [0, 1]")
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub p_suc: f64,
    pub p_err: f64,
    pub p_inc: f64,
}

impl Metrics {
    pub fn total(&self) -> f64 {
        self.p_suc + self.p_err + self.p_inc
    }

    pub fn scaled(&self, w: f64) -> Metrics {
        Metrics { p_suc: self.p_suc * w, p_err: self.p_err * w, p_inc: self.p_inc * w }
    }

    pub fn add(&self, o: &Metrics) -> Metrics {
        Metrics { p_suc: self.p_suc + o.p_suc, p_err: self.p_err + o.p_err, p_inc: self.p_inc + o.p_inc }
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P_suc={:.4} P_err={:.4} P_inc={:.4}", self.p_suc, self.p_err, self.p_inc)
    }
}

/// Splits outcome probabilities (indexed by [`Outcome::index`]) into rates
/// for an input of class `truth`.
pub fn metrics_from_probs(probs: &[f64; 4], truth: Label, assignment: &OutcomeAssignment) -> Metrics {
    let mut m = Metrics::default();
    for o in Outcome::ALL {
        let p = probs[o.index()];
        match assignment.label(o) {
            Label::Inconclusive => m.p_inc += p,
            l if l == truth => m.p_suc += p,
            _ => m.p_err += p,
        }
    }
    m
}

pub fn per_input_metrics(
    circuit: &DiscriminatorCircuit,
    input: &LabeledInput,
    assignment: &OutcomeAssignment,
) -> Result<Metrics> {
    let dist = povm::outcome_probabilities(circuit, &input.state)?;
    let probs: [f64; 4] = dist.probs().try_into().expect("two ancillas give four outcomes");
    Ok(metrics_from_probs(&probs, input.true_label, assignment))
}

/// A family together with its finite sample set `S_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub family: Family,
    pub prior: f64,
    pub samples: Vec<f64>,
}

impl EnsembleMember {
    /// Pure-state branches of one sample with their mixture weights.
    pub fn branches(&self, param: f64) -> impl Iterator<Item = (f64, [f64; 4])> {
        let branches: [(f64, [f64; 4]); 2] = match self.family {
            Family::Psi1 => [(1.0, psi1_amplitudes(param)), (0.0, [0.0; 4])],
            Family::Psi23 => [(0.5, psi23_amplitudes(Sign::Plus, param)), (0.5, psi23_amplitudes(Sign::Minus, param))],
        };
        branches.into_iter().filter(|(w, _)| *w > 0.0)
    }

    /// Exact rates for one sample, averaging over the sign branches.
    pub fn sample_metrics(&self, effects: &Effects, param: f64, assignment: &OutcomeAssignment) -> Metrics {
        let truth = self.family.label();
        self.branches(param).fold(Metrics::default(), |acc, (w, amps)| {
            let probs = effects.probabilities_real(&amps);
            acc.add(&metrics_from_probs(&probs, truth, assignment).scaled(w))
        })
    }

    /// Sample-averaged rates.
    pub fn mean_metrics(&self, effects: &Effects, assignment: &OutcomeAssignment) -> Result<Metrics> {
        if self.samples.is_empty() {
            return Err(Error::Arity(format!("{:?} sample set is empty", self.family)));
        }
        let sum = self
            .samples
            .iter()
            .fold(Metrics::default(), |acc, &a| acc.add(&self.sample_metrics(effects, a, assignment)));
        Ok(sum.scaled(1.0 / self.samples.len() as f64))
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("prior", self.prior)?;
        if self.samples.is_empty() {
            return Err(Error::Arity(format!("{:?} sample set is empty", self.family)));
        }
        for &s in &self.samples {
            check_unit("sample", s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<EnsembleMember>,
}

impl Ensemble {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        let e = Self { members };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::Arity("ensemble has no families".into()));
        }
        for m in &self.members {
            m.validate()?;
        }
        validate_priors(self.members.iter().map(|m| &m.prior))
    }

    pub fn total_samples(&self) -> usize {
        self.members.iter().map(|m| m.samples.len()).sum()
    }

    /// Prior-weighted, sample-averaged rates from precomputed effects.
    pub fn metrics_with_effects(&self, effects: &Effects, assignment: &OutcomeAssignment) -> Result<Metrics> {
        self.members
            .iter()
            .try_fold(Metrics::default(), |acc, m| Ok(acc.add(&m.mean_metrics(effects, assignment)?.scaled(m.prior))))
    }
}

/// `Σ_i λ_i · mean_{a∈S_i} P(ψ_i(a))` for each of the three rates. Mixed-class
/// samples contribute both sign branches with weight ½.
pub fn aggregate_metrics(
    circuit: &DiscriminatorCircuit,
    ensemble: &Ensemble,
    assignment: &OutcomeAssignment,
) -> Result<Metrics> {
    ensemble.validate()?;
    ensemble.metrics_with_effects(&circuit.effects(), assignment)
}

/// Mean `|⟨ψ_1(a)|ψ_{2/3}(b)⟩|` over all cross-class sample pairs and both
/// signs. For these families the overlap is `a·b` for either sign.
pub fn mean_cross_fidelity(class1: &[f64], class2: &[f64]) -> Result<f64> {
    if class1.is_empty() || class2.is_empty() {
        return Err(Error::Arity("fidelity needs samples from both classes".into()));
    }
    let mut total = 0.0;
    for &a in class1 {
        let s1 = psi1(a)?;
        for &b in class2 {
            for sign in [Sign::Plus, Sign::Minus] {
                total += 0.5 * simulator::fidelity(&s1, &psi23(sign, b)?)?;
            }
        }
    }
    Ok(total / (class1.len() * class2.len()) as f64)
}
