use povm_core::discrimination::{per_input_metrics, EnsembleMember, Family, LabeledInput, OutcomeAssignment, Sign};
use povm_core::povm::{build_discriminator_circuit, CircuitParams, DiscriminatorCircuit, Effects};
use povm_core::sampling::{estimated_metrics, sampled_sample_metrics, ShotPlan};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn circuit(seed: u64) -> DiscriminatorCircuit {
    build_discriminator_circuit(CircuitParams::random(&mut ChaCha8Rng::seed_from_u64(seed)))
}

fn input() -> LabeledInput {
    LabeledInput::new(Family::Psi1, 0.5, Sign::Plus).unwrap()
}

/// Success-rate estimates from `reps` independent shot plans.
fn estimates(c: &DiscriminatorCircuit, shots: u64, reps: u64, seed_base: u64) -> Vec<f64> {
    let a = OutcomeAssignment::default();
    (0..reps)
        .map(|r| estimated_metrics(c, &input(), &a, &ShotPlan::new(shots, seed_base + r).unwrap()).unwrap().p_suc)
        .collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn binomial_spread_and_unbiasedness() {
    let c = circuit(3);
    let exact = per_input_metrics(&c, &input(), &OutcomeAssignment::default()).unwrap().p_suc;
    assert!(exact > 0.05 && exact < 0.95, "pick a non-degenerate circuit: {exact}");
    let est = estimates(&c, 100, 10_000, 0);
    let (mean, sd) = mean_sd(&est);
    let expected_sd = (exact * (1.0 - exact) / 100.0).sqrt();
    assert!((sd / expected_sd - 1.0).abs() < 0.2, "sd {sd} vs {expected_sd}");
    assert!((mean - exact).abs() < 3.0 * expected_sd / 100.0, "mean {mean} vs {exact}");
}

#[test]
fn error_shrinks_as_inverse_square_root() {
    let c = circuit(5);
    let exact = per_input_metrics(&c, &input(), &OutcomeAssignment::default()).unwrap().p_suc;
    let points: Vec<(f64, f64)> = [100u64, 1_000, 10_000, 100_000]
        .iter()
        .map(|&n| {
            let est = estimates(&c, n, 400, n * 7);
            let mse = est.iter().map(|e| (e - exact).powi(2)).sum::<f64>() / est.len() as f64;
            ((n as f64).ln(), 0.5 * mse.ln())
        })
        .collect();
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
}

#[test]
fn large_shot_count_converges() {
    let c = circuit(8);
    let a = OutcomeAssignment::default();
    let exact = per_input_metrics(&c, &input(), &a).unwrap();
    let est = estimated_metrics(&c, &input(), &a, &ShotPlan::new(10_000_000, 1).unwrap()).unwrap();
    for (e, x) in [(est.p_suc, exact.p_suc), (est.p_err, exact.p_err), (est.p_inc, exact.p_inc)] {
        assert!((e - x).abs() < 0.002, "{e} vs {x}");
    }
}

#[test]
fn mixed_class_sampling_matches_exact_mixture() {
    let params = CircuitParams::random(&mut ChaCha8Rng::seed_from_u64(21));
    let effects = Effects::for_params(params.as_slice());
    let member = EnsembleMember { family: Family::Psi23, prior: 1.0, samples: vec![0.6] };
    let a = OutcomeAssignment::default();
    let exact = member.sample_metrics(&effects, 0.6, &a);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let draws: Vec<f64> =
        (0..10_000).map(|_| sampled_sample_metrics(&mut rng, &effects, &member, 0.6, &a, 1).p_suc).collect();
    let (mean, _) = mean_sd(&draws);
    let sigma = (exact.p_suc * (1.0 - exact.p_suc) / 10_000.0).sqrt();
    assert!((mean - exact.p_suc).abs() < 3.0 * sigma, "{mean} vs {}", exact.p_suc);
}

proptest! {
    #[test]
    fn counts_sum_to_shots(weights in prop::collection::vec(0.0f64..1.0, 1..9), shots in 1u64..100_000, seed in any::<u64>()) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 1e-6);
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let counts = povm_core::sampling::multinomial(&mut ChaCha8Rng::seed_from_u64(seed), &probs, shots);
        prop_assert_eq!(counts.iter().sum::<u64>(), shots);
        for (c, p) in counts.iter().zip(&probs) {
            if *p == 0.0 {
                prop_assert_eq!(*c, 0);
            }
        }
    }
}
