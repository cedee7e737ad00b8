//! Brute-force oracles shared by the integration tests. Nothing here goes
//! through the statevector kernels.
#![allow(dead_code)]

use num_complex::Complex64;
use povm_core::linalg::CMatrix;
use povm_core::povm::{cascade_to_pattern_angles, Axis, BlockKind, CircuitParams, GateTemplate, Outcome, Topology};
use povm_core::simulator::{
    apply_single_qubit_gate, apply_uniformly_controlled_ry, measure_marginal, pauli_x, Gate, Matrix2, StateVector,
};
use rand::Rng;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn proj(bit: usize) -> Matrix2 {
    if bit == 0 {
        [[c(1.0), c(0.0)], [c(0.0), c(0.0)]]
    } else {
        [[c(0.0), c(0.0)], [c(0.0), c(1.0)]]
    }
}

pub fn eye2() -> Matrix2 {
    [[c(1.0), c(0.0)], [c(0.0), c(1.0)]]
}

pub fn x2() -> Matrix2 {
    [[c(0.0), c(1.0)], [c(1.0), c(0.0)]]
}

pub fn ry2(theta: f64) -> Matrix2 {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co), c(-s)], [c(s), c(co)]]
}

/// `ops[0] ⊗ ops[1] ⊗ …` with qubit 0 leftmost.
pub fn kron(ops: &[Matrix2]) -> CMatrix {
    let dim = 1 << ops.len();
    let mut m = CMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut v = c(1.0);
            for (q, op) in ops.iter().enumerate() {
                let shift = ops.len() - 1 - q;
                v *= op[(i >> shift) & 1][(j >> shift) & 1];
            }
            m[(i, j)] = v;
        }
    }
    m
}

pub fn add(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = a.clone();
    for i in 0..a.dim() {
        for j in 0..a.dim() {
            out[(i, j)] += b[(i, j)];
        }
    }
    out
}

/// Full operator of `gate` on `n` qubits from tensor products.
pub fn full_matrix(gate: &Gate, n: usize) -> CMatrix {
    match gate {
        Gate::SingleQubit { matrix, target } => {
            let ops: Vec<Matrix2> = (0..n).map(|q| if q == *target { *matrix } else { eye2() }).collect();
            kron(&ops)
        }
        Gate::Cnot { control, target } => {
            let branch = |bit: usize| {
                let ops: Vec<Matrix2> = (0..n)
                    .map(|q| {
                        if q == *control {
                            proj(bit)
                        } else if q == *target && bit == 1 {
                            x2()
                        } else {
                            eye2()
                        }
                    })
                    .collect();
                kron(&ops)
            };
            add(&branch(0), &branch(1))
        }
        Gate::UniformlyControlledRy { angles, controls, target } => {
            let k = controls.len();
            let mut total = CMatrix::zeros(1 << n);
            for (pattern, theta) in angles.iter().enumerate() {
                let ops: Vec<Matrix2> = (0..n)
                    .map(|q| {
                        if let Some(pos) = controls.iter().position(|&cq| cq == q) {
                            proj((pattern >> (k - 1 - pos)) & 1)
                        } else if q == *target {
                            ry2(*theta)
                        } else {
                            eye2()
                        }
                    })
                    .collect();
                total = add(&total, &kron(&ops));
            }
            total
        }
    }
}

/// Product of per-gate brute-force matrices in time order.
pub fn sequence_matrix(gates: &[Gate], n: usize) -> CMatrix {
    gates.iter().fold(CMatrix::identity(1 << n), |acc, g| full_matrix(g, n).matmul(&acc))
}

/// Rank of a real matrix by Gaussian elimination with partial pivoting.
pub fn rank(mut rows: Vec<Vec<f64>>, tol: f64) -> usize {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pivot) =
            (rank..rows.len()).max_by(|&a, &b| rows[a][col].abs().partial_cmp(&rows[b][col].abs()).unwrap())
        else {
            break;
        };
        if rows[pivot][col].abs() < tol {
            continue;
        }
        rows.swap(rank, pivot);
        for r in 0..rows.len() {
            if r != rank {
                let f = rows[r][col] / rows[rank][col];
                for cc in col..ncols {
                    rows[r][cc] -= f * rows[rank][cc];
                }
            }
        }
        rank += 1;
    }
    rank
}

pub fn random_input(rng: &mut impl Rng) -> StateVector {
    let amps: Vec<Complex64> =
        (0..4).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::new(amps.iter().map(|a| a / norm).collect()).unwrap()
}

/// Effects from the dense operator: `E_m[j][k] = Σ_d conj(U[(m,d), j]) U[(m,d), k]`
/// over rows whose ancilla bits read `m` and input columns with ancillas in |00⟩.
pub fn oracle_effects(u: &CMatrix) -> Vec<CMatrix> {
    Outcome::ALL
        .iter()
        .map(|o| {
            let anc = (usize::from(o.i1()) << 3) | (usize::from(o.i2()) << 2);
            let mut e = CMatrix::zeros(4);
            for j in 0..4 {
                for k in 0..4 {
                    e[(j, k)] = (0..4).map(|d| u[(anc | d, j)].conj() * u[(anc | d, k)]).sum();
                }
            }
            e
        })
        .collect()
}

fn remap(q: usize) -> usize {
    match q {
        0 => 0,
        2 => 1,
        3 => 2,
        _ => panic!("qubit {q} has no image in the single-ancilla register"),
    }
}

/// Measure the ancilla, reset it with a classically controlled NOT, apply
/// the branch-selected data unitary and the data-controlled `Ry`, then
/// measure the same ancilla again.
pub fn sequential_collapse(params: &CircuitParams, input: &StateVector) -> [f64; 4] {
    let topology = Topology::discriminator();
    let blocks = topology.blocks();
    let angles = params.as_slice();
    let bind = |g: &GateTemplate, remapped: bool| -> Gate {
        let m = |q: usize| if remapped { remap(q) } else { q };
        match *g {
            GateTemplate::Rotation { axis, qubit, param } => {
                Gate::SingleQubit { matrix: povm_core::povm::rotation_matrix(axis, angles[param]), target: m(qubit) }
            }
            GateTemplate::Cnot { control, target } => Gate::Cnot { control: m(control), target: m(target) },
        }
    };

    // Stage 1 on (ancilla, d0, d1).
    let mut state = StateVector::basis(1, 0).unwrap().tensor(input).unwrap();
    for block in &blocks[..2] {
        for g in &topology.gates()[block.gates.clone()] {
            state = bind(g, true).apply(&state).unwrap();
        }
    }
    let first = measure_marginal(&state, &[0]).unwrap();

    // Branch unitaries from the dense operator of the middle blocks.
    let middle: Vec<Gate> =
        blocks[2..5].iter().flat_map(|b| topology.gates()[b.gates.clone()].iter().map(|g| bind(g, false))).collect();
    let mid = sequence_matrix(&middle, 4);

    let last = &blocks[5];
    assert!(matches!(last.kind, BlockKind::UniformlyControlled { axis: Axis::Y, .. }));
    let patterns = cascade_to_pattern_angles(&angles[last.params.clone()]);

    let mut joint = [0.0; 4];
    for r in 0..2usize {
        let p_r = first.prob(r);
        if p_r < 1e-14 {
            continue;
        }
        let norm = p_r.sqrt();
        let collapsed: Vec<Complex64> = state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, a)| if i >> 2 == r { a / norm } else { Complex64::new(0.0, 0.0) })
            .collect();
        let mut s = StateVector::new(collapsed).unwrap();
        if r == 1 {
            s = apply_single_qubit_gate(&s, &pauli_x(), 0).unwrap();
        }
        // Data block of the middle operator for first-ancilla value r.
        let mut data = [Complex64::new(0.0, 0.0); 4];
        for dout in 0..4 {
            for din in 0..4 {
                let u = mid[((r << 3) | dout, (r << 3) | din)];
                data[dout] += u * s.amplitudes()[din];
            }
            for other in 0..2usize {
                for din in 0..4 {
                    if other != r {
                        assert!(mid[((other << 3) | dout, (r << 3) | din)].norm() < 1e-12);
                    }
                }
            }
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 8];
        amps[..4].copy_from_slice(&data);
        let s = StateVector::new(amps).unwrap();
        let s = apply_uniformly_controlled_ry(&s, &patterns[r * 4..r * 4 + 4], &[1, 2], 0).unwrap();
        let second = measure_marginal(&s, &[0]).unwrap();
        for i2 in 0..2u8 {
            joint[Outcome::from_bits(i2, r as u8).index()] = p_r * second.prob(usize::from(i2));
        }
    }
    joint
}
