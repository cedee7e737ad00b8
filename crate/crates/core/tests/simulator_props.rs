mod common;

use common::{full_matrix, ry2};
use num_complex::Complex64;
use povm_core::simulator::{
    apply_single_qubit_gate, apply_uniformly_controlled_ry, measure_marginal, ry, rz, Gate, Matrix2, StateVector,
};
use proptest::prelude::*;

fn random_state(n: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec(-1.0f64..1.0, 2 << n).prop_filter_map("zero vector", move |v| {
        let amps: Vec<Complex64> = v.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        (norm > 1e-3).then(|| StateVector::new(amps.iter().map(|a| a / norm).collect()).unwrap())
    })
}

fn random_unitary() -> impl Strategy<Value = Matrix2> {
    (-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0).prop_map(|(a, b, g, phase)| {
        let m = povm_core::simulator::matmul2(&rz(a), &povm_core::simulator::matmul2(&ry(b), &rz(g)));
        let p = Complex64::from_polar(1.0, phase);
        [[m[0][0] * p, m[0][1] * p], [m[1][0] * p, m[1][1] * p]]
    })
}

fn random_gate(n: usize) -> impl Strategy<Value = Gate> {
    let single = (random_unitary(), 0..n).prop_map(|(matrix, target)| Gate::SingleQubit { matrix, target });
    let cnot = (0..n, 1..n).prop_map(move |(control, off)| Gate::Cnot { control, target: (control + off) % n });
    let ucry = (Just(()), 0..n)
        .prop_flat_map(move |(_, target)| {
            let others: Vec<usize> = (0..n).filter(|&q| q != target).collect();
            (Just(target), prop::sample::subsequence(others.clone(), 0..=others.len()).prop_shuffle())
        })
        .prop_flat_map(|(target, controls)| {
            let k = controls.len();
            (Just(target), Just(controls), prop::collection::vec(-6.3f64..6.3, 1 << k))
        })
        .prop_map(|(target, controls, angles)| Gate::UniformlyControlledRy { angles, controls, target });
    prop_oneof![single, cnot, ucry]
}

fn state_and_gate() -> impl Strategy<Value = (StateVector, Gate)> {
    (2usize..=4).prop_flat_map(|n| (random_state(n), random_gate(n)))
}

proptest! {
    #[test]
    fn gates_preserve_norm((state, gate) in state_and_gate()) {
        let out = gate.apply(&state).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gates_match_tensor_product_matrices((state, gate) in state_and_gate()) {
        let out = gate.apply(&state).unwrap();
        let expected = full_matrix(&gate, state.num_qubits()).matvec(state.amplitudes());
        for (a, b) in out.amplitudes().iter().zip(&expected) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn ucry_with_equal_angles_is_plain_ry(state in random_state(3), theta in -6.3f64..6.3, target in 0usize..3) {
        let controls: Vec<usize> = (0..3).filter(|&q| q != target).collect();
        let uc = apply_uniformly_controlled_ry(&state, &[theta; 4], &controls, target).unwrap();
        let plain = apply_single_qubit_gate(&state, &ry2(theta), target).unwrap();
        for (a, b) in uc.amplitudes().iter().zip(plain.amplitudes()) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn marginals_are_distributions(state in random_state(4), mask in 1usize..16) {
        let qubits: Vec<usize> = (0..4).filter(|q| mask >> q & 1 == 1).collect();
        let d = measure_marginal(&state, &qubits).unwrap();
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
        // Partial-trace brute force: sum |amp|² over basis states whose
        // measured bits read k.
        for (k, p) in d.probs().iter().enumerate() {
            let mut expected = 0.0;
            for (i, a) in state.amplitudes().iter().enumerate() {
                let bits: usize = qubits.iter().fold(0, |acc, &q| (acc << 1) | (i >> (3 - q) & 1));
                if bits == k {
                    expected += a.norm_sqr();
                }
            }
            prop_assert!((p - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn bell_marginal_from_partial_trace() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = StateVector::from_real(&[h, 0.0, 0.0, h]).unwrap();
    let d = measure_marginal(&bell, &[0]).unwrap();
    // Brute force over the 4 amplitudes: qubit 0 is the high bit.
    let p0: f64 = bell.amplitudes()[..2].iter().map(|a| a.norm_sqr()).sum();
    let p1: f64 = bell.amplitudes()[2..].iter().map(|a| a.norm_sqr()).sum();
    assert!((d.prob(0) - p0).abs() < 1e-15 && (d.prob(1) - p1).abs() < 1e-15);
    assert!((d.prob(0) - 0.5).abs() < 1e-12);
}
