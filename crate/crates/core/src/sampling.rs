//! Finite-shot estimation of outcome probabilities.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::discrimination::{metrics_from_probs, EnsembleMember, LabeledInput, Metrics, OutcomeAssignment};
use crate::error::{Error, Result};
use crate::povm::{self, DiscriminatorCircuit, Effects};
use crate::simulator::OutcomeDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotPlan {
    pub shots: u64,
    pub seed: u64,
}

impl ShotPlan {
    pub fn new(shots: u64, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::Domain { name: "shots", value: 0.0, domain: "[1, ∞)" });
        }
        Ok(Self { shots, seed })
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Exact multinomial draw by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, probs: &[f64], shots: u64) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q).expect("q in (0, 1)").sample(rng)
        };
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    counts
}

pub fn sample_outcome_counts(probs: &OutcomeDistribution, plan: &ShotPlan) -> Vec<u64> {
    multinomial(&mut plan.rng(), probs.probs(), plan.shots)
}

pub fn estimated_probs(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// `⌈1/ε⁴⌉`: shots needed for the estimation error of a cost value to stay
/// at the `ε²` level of a forward-difference truncation error.
pub fn shots_for_tolerance(eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain { name: "epsilon", value: eps, domain: "(0, ∞)" });
    }
    let x = eps.powi(-4);
    if x >= u64::MAX as f64 {
        return Err(Error::Domain { name: "epsilon", value: eps, domain: "shot count representable as u64" });
    }
    // Snap values like 1e12·(1 ± 2⁻⁵²) back to the integer they represent.
    let nearest = x.round();
    let n = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.ceil() };
    Ok((n as u64).max(1))
}

/// Rates computed from `plan.shots` simulated measurements of one input.
pub fn estimated_metrics(
    circuit: &DiscriminatorCircuit,
    input: &LabeledInput,
    assignment: &OutcomeAssignment,
    plan: &ShotPlan,
) -> Result<Metrics> {
    let dist = povm::outcome_probabilities(circuit, &input.state)?;
    let counts = sample_outcome_counts(&dist, plan);
    let est: [f64; 4] = estimated_probs(&counts).try_into().expect("four outcomes");
    Ok(metrics_from_probs(&est, input.true_label, assignment))
}

/// Shot-estimated rates for one ensemble sample. Each shot of a mixed-class
/// sample prepares a fair random sign, so the shots are first split
/// binomially between the two branches.
pub fn sampled_sample_metrics<R: Rng + ?Sized>(
    rng: &mut R,
    effects: &Effects,
    member: &EnsembleMember,
    param: f64,
    assignment: &OutcomeAssignment,
    shots: u64,
) -> Metrics {
    let branches: Vec<(f64, [f64; 4])> = member.branches(param).collect();
    let mut counts = [0u64; 4];
    let mut remaining = shots;
    for (i, (w, amps)) in branches.iter().enumerate() {
        let n = if i + 1 == branches.len() {
            remaining
        } else {
            Binomial::new(remaining, *w).expect("branch weight in [0, 1]").sample(rng)
        };
        remaining -= n;
        let probs = effects.probabilities_real(amps);
        for (c, k) in counts.iter_mut().zip(multinomial(rng, &probs, n)) {
            *c += k;
        }
    }
    let est = counts.map(|c| c as f64 / shots as f64);
    metrics_from_probs(&est, member.family.label(), assignment)
}
