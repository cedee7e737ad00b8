use povm_core::discrimination::{
    per_input_metrics, Ensemble, EnsembleMember, Family, LabeledInput, OutcomeAssignment, Sign,
};
use povm_core::povm::{build_discriminator_circuit, CircuitParams, NUM_PARAMS};
use povm_core::training::{cost_j1, forward_diff_gradient, minibatch_gradient, CostConfig, EvalMode};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_params(seed: u64) -> Vec<f64> {
    CircuitParams::random(&mut ChaCha8Rng::seed_from_u64(seed)).into_vec()
}

fn full_range() -> Ensemble {
    Ensemble::new(vec![
        EnsembleMember { family: Family::Psi1, prior: 0.5, samples: (0..100).map(|i| i as f64 / 99.0).collect() },
        EnsembleMember { family: Family::Psi23, prior: 0.5, samples: vec![std::f64::consts::FRAC_1_SQRT_2] },
    ])
    .unwrap()
}

/// Cost rebuilt from per-input rates on explicit statevectors.
fn brute_force_cost(params: &[f64], ensemble: &Ensemble, cost: &CostConfig, a: &OutcomeAssignment) -> f64 {
    let circuit = build_discriminator_circuit(CircuitParams::new(params.to_vec()).unwrap());
    let mut total = 0.0;
    for m in &ensemble.members {
        let signs: &[Sign] = match m.family {
            Family::Psi1 => &[Sign::Plus],
            Family::Psi23 => &[Sign::Plus, Sign::Minus],
        };
        let mut sum = 0.0;
        for &x in &m.samples {
            for &s in signs {
                let r = per_input_metrics(&circuit, &LabeledInput::new(m.family, x, s).unwrap(), a).unwrap();
                let loss = (1.0 - r.p_suc) + cost.alpha_err * r.p_err + cost.alpha_inc * r.p_inc;
                sum += loss / signs.len() as f64;
            }
        }
        total += sum / m.samples.len() as f64;
    }
    cost.scale * total
}

#[test]
fn cost_matches_per_input_enumeration() {
    let ensemble = Ensemble::new(vec![
        EnsembleMember { family: Family::Psi1, prior: 0.3, samples: vec![0.2, 0.55] },
        EnsembleMember { family: Family::Psi23, prior: 0.7, samples: vec![0.8] },
    ])
    .unwrap();
    let a = OutcomeAssignment::default();
    for seed in 0..20 {
        let p = random_params(seed);
        let cost = CostConfig { alpha_err: 25.0, alpha_inc: 2.0, scale: 1.0 + seed as f64 };
        let fast = cost_j1(&p, &ensemble, &cost, &a).unwrap();
        let slow = brute_force_cost(&p, &ensemble, &cost, &a);
        assert!((fast - slow).abs() < 1e-10, "seed {seed}: {fast} vs {slow}");
    }
}

#[test]
fn empty_sample_set_is_rejected() {
    let ensemble = Ensemble { members: vec![EnsembleMember { family: Family::Psi1, prior: 1.0, samples: vec![] }] };
    let err = cost_j1(&random_params(0), &ensemble, &CostConfig::new(1.0, 1.0), &OutcomeAssignment::default());
    assert!(matches!(err, Err(povm_core::Error::Arity(_))));
}

#[test]
fn forward_difference_agrees_with_central_difference() {
    let ensemble = full_range();
    let a = OutcomeAssignment::default();
    let cost = CostConfig::new(20.0, 2.0);
    let f = |x: &[f64]| cost_j1(x, &ensemble, &cost, &a).unwrap();
    for seed in 0..5 {
        let p = random_params(100 + seed);
        let fwd = forward_diff_gradient(f, &p, 1e-3).unwrap();
        let h = 1e-4;
        for j in 0..NUM_PARAMS {
            let mut up = p.clone();
            let mut down = p.clone();
            up[j] += h;
            down[j] -= h;
            let central = (f(&up) - f(&down)) / (2.0 * h);
            assert!((fwd[j] - central).abs() < 5e-3, "seed {seed} component {j}: {} vs {central}", fwd[j]);
        }
    }
}

#[test]
fn minibatch_gradient_is_unbiased() {
    let ensemble = full_range();
    let a = OutcomeAssignment::default();
    let cost = CostConfig::new(20.0, 2.0);
    let p = random_params(7);
    let step = 1e-3;
    let full = forward_diff_gradient(|x| cost_j1(x, &ensemble, &cost, &a).unwrap(), &p, step).unwrap();

    let reps = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sum = vec![0.0; NUM_PARAMS];
    let mut sum_sq = vec![0.0; NUM_PARAMS];
    for _ in 0..reps {
        let (g, _) = minibatch_gradient(&p, &ensemble, &cost, &a, 50, step, &mut rng, EvalMode::Exact).unwrap();
        for j in 0..NUM_PARAMS {
            sum[j] += g[j];
            sum_sq[j] += g[j] * g[j];
        }
    }
    let n = reps as f64;
    for j in 0..NUM_PARAMS {
        let mean = sum[j] / n;
        let var = (sum_sq[j] / n - mean * mean).max(0.0) * n / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - full[j]).abs() <= 3.0 * se + 1e-9, "component {j}: mean {mean}, full {}, se {se}", full[j]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn forward_difference_error_is_first_order(seed in any::<u64>(), step in prop::sample::select(vec![1e-2, 1e-3])) {
        let ensemble = full_range();
        let a = OutcomeAssignment::default();
        let cost = CostConfig::new(5.0, 2.0);
        let f = |x: &[f64]| cost_j1(x, &ensemble, &cost, &a).unwrap();
        let p = random_params(seed);
        let fwd = forward_diff_gradient(f, &p, step).unwrap();
        for (j, g) in fwd.iter().enumerate() {
            let mut up = p.clone();
            let mut down = p.clone();
            up[j] += 1e-5;
            down[j] -= 1e-5;
            let central = (f(&up) - f(&down)) / 2e-5;
            prop_assert!((g - central).abs() <= 10.0 * step, "component {}: {} vs {}", j, g, central);
        }
    }

    #[test]
    fn cost_scales_linearly(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let ensemble = full_range();
        let a = OutcomeAssignment::default();
        let p = random_params(seed);
        let unit = CostConfig::new(25.0, 2.0);
        let j1 = cost_j1(&p, &ensemble, &unit, &a).unwrap();
        let js = cost_j1(&p, &ensemble, &CostConfig { scale, ..unit }, &a).unwrap();
        prop_assert!((js - scale * j1).abs() <= 1e-12 * js.abs().max(1.0));
        prop_assert!(j1 >= 0.0);
    }
}
