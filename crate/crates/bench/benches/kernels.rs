use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use povm_core::discrimination::{Ensemble, EnsembleMember, Family, OutcomeAssignment};
use povm_core::povm::{
    build_discriminator_circuit, effects_with_shifts, outcome_probabilities, CircuitParams, Effects,
};
use povm_core::simulator::{apply_cnot, apply_single_qubit_gate, ry, StateVector};
use povm_core::training::{cost_j1, minibatch_gradient, CostConfig, EvalMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn full_range() -> Ensemble {
    let a: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    Ensemble::new(vec![
        EnsembleMember { family: Family::Psi1, prior: 1.0 / 3.0, samples: a },
        EnsembleMember { family: Family::Psi23, prior: 2.0 / 3.0, samples: vec![std::f64::consts::FRAC_1_SQRT_2] },
    ])
    .unwrap()
}

fn gates(c: &mut Criterion) {
    let state = StateVector::basis(4, 5).unwrap();
    let m = ry(0.7);
    c.bench_function("single_qubit_gate_4q", |b| b.iter(|| apply_single_qubit_gate(black_box(&state), &m, 2).unwrap()));
    c.bench_function("cnot_4q", |b| b.iter(|| apply_cnot(black_box(&state), 1, 3).unwrap()));
}

fn circuit(c: &mut Criterion) {
    let params = CircuitParams::random(&mut ChaCha8Rng::seed_from_u64(1));
    let circuit = build_discriminator_circuit(params.clone());
    let input = StateVector::from_real(&[0.6, 0.0, 0.8, 0.0]).unwrap();
    c.bench_function("outcome_probabilities", |b| {
        b.iter(|| outcome_probabilities(&circuit, black_box(&input)).unwrap())
    });
    c.bench_function("effects_for_params", |b| b.iter(|| Effects::for_params(black_box(params.as_slice()))));
    c.bench_function("effects_with_shifts", |b| b.iter(|| effects_with_shifts(black_box(params.as_slice()), 1e-3)));
}

fn training(c: &mut Criterion) {
    let params = CircuitParams::random(&mut ChaCha8Rng::seed_from_u64(2));
    let ensemble = full_range();
    let cost = CostConfig::new(20.0, 2.0);
    let assignment = OutcomeAssignment::default();
    c.bench_function("cost_j1_full_range", |b| {
        b.iter(|| cost_j1(black_box(params.as_slice()), &ensemble, &cost, &assignment).unwrap())
    });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    c.bench_function("minibatch_gradient_exact", |b| {
        b.iter(|| {
            minibatch_gradient(params.as_slice(), &ensemble, &cost, &assignment, 50, 1e-3, &mut rng, EvalMode::Exact)
                .unwrap()
        })
    });
    c.bench_function("minibatch_gradient_1000_shots", |b| {
        b.iter(|| {
            minibatch_gradient(
                params.as_slice(),
                &ensemble,
                &cost,
                &assignment,
                50,
                1e-2,
                &mut rng,
                EvalMode::Sampled { shots: 1000 },
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, gates, circuit, training);
criterion_main!(benches);
