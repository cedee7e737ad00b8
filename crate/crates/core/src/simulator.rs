//! Dense statevector engine for small registers.
//!
//! Bit-ordering convention: qubit 0 is the most significant bit of a basis
//! index, so on a 2-qubit register `|10⟩` (index 2) has qubit 0 set. The
//! same convention applies to every qubit list in this module: the first
//! listed qubit is the most significant bit of the derived index
//! (control patterns of uniformly controlled gates and outcome labels of
//! [`measure_marginal`]).
//!
//! The public operations are pure: they borrow a state and return a new
//! one. The in-place kernels underneath are crate-private and shared with
//! the circuit evaluator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register this engine accepts.
pub const MAX_QUBITS: usize = 8;

/// Tolerance for the norm of a state and for gate unitarity.
pub const NORM_TOL: f64 = 1e-10;

/// Probability sums deviating by less than this are silently renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;

pub type Matrix2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn identity2() -> Matrix2 {
    [[ONE, ZERO], [ZERO, ONE]]
}

pub fn pauli_x() -> Matrix2 {
    [[ZERO, ONE], [ONE, ZERO]]
}

/// `exp(-i θ Y / 2)`.
pub fn ry(theta: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [[Complex64::new(c, 0.0), Complex64::new(-s, 0.0)], [Complex64::new(s, 0.0), Complex64::new(c, 0.0)]]
}

/// `exp(-i θ Z / 2)`.
pub fn rz(theta: f64) -> Matrix2 {
    let half = theta / 2.0;
    [[Complex64::from_polar(1.0, -half), ZERO], [ZERO, Complex64::from_polar(1.0, half)]]
}

pub fn matmul2(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut out = [[ZERO; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Largest entrywise deviation of `M† M` from the identity.
pub fn unitarity_defect(m: &Matrix2) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let dot = m[0][i].conj() * m[0][j] + m[1][i].conj() * m[1][j];
            let expected = if i == j { ONE } else { ZERO };
            worst = worst.max((dot - expected).norm());
        }
    }
    worst
}

/// Normalized complex amplitude vector over `2^num_qubits` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    num_qubits: usize,
}

impl StateVector {
    /// Validates length and normalization.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Arity(format!("amplitude count {len} is not a power of two ≥ 2")));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(Error::Arity(format!("{num_qubits} qubits exceeds the supported maximum of {MAX_QUBITS}")));
        }
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !norm_sqr.is_finite() || (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::Normalization { norm_sqr });
        }
        Ok(Self { amplitudes, num_qubits })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Arity(format!("register size {num_qubits} outside 1..={MAX_QUBITS}")));
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::Shape { expected: dim, got: index });
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self { amplitudes, num_qubits })
    }

    pub(crate) fn from_raw(amplitudes: Vec<Complex64>, num_qubits: usize) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << num_qubits);
        Self { amplitudes, num_qubits }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Tensor product `self ⊗ other`; `self` occupies the leading qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let num_qubits = self.num_qubits + other.num_qubits;
        if num_qubits > MAX_QUBITS {
            return Err(Error::Arity(format!("{num_qubits} qubits exceeds the supported maximum of {MAX_QUBITS}")));
        }
        let amplitudes = self.amplitudes.iter().flat_map(|a| other.amplitudes.iter().map(move |b| a * b)).collect();
        Ok(StateVector { amplitudes, num_qubits })
    }

    pub(crate) fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(Error::Index { index: q, num_qubits: self.num_qubits });
        }
        Ok(())
    }
}

/// A gate acting on a register.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    SingleQubit {
        matrix: Matrix2,
        target: usize,
    },
    Cnot {
        control: usize,
        target: usize,
    },
    /// Applies `Ry(angles[k])` to `target` on the subspace where the
    /// control register (first control = most significant bit) reads `k`.
    UniformlyControlledRy {
        angles: Vec<f64>,
        controls: Vec<usize>,
        target: usize,
    },
}

impl Gate {
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q >= num_qubits {
                Err(Error::Index { index: q, num_qubits })
            } else {
                Ok(())
            }
        };
        match self {
            Gate::SingleQubit { matrix, target } => {
                check(*target)?;
                let defect = unitarity_defect(matrix);
                if !(defect <= NORM_TOL) {
                    return Err(Error::InvalidGate(format!("matrix is not unitary (‖M†M − I‖ = {defect:.3e})")));
                }
            }
            Gate::Cnot { control, target } => {
                check(*control)?;
                check(*target)?;
                if control == target {
                    return Err(Error::InvalidGate(format!("CNOT control and target are both qubit {control}")));
                }
            }
            Gate::UniformlyControlledRy { angles, controls, target } => {
                check(*target)?;
                for (i, &c) in controls.iter().enumerate() {
                    check(c)?;
                    if c == *target {
                        return Err(Error::InvalidGate(format!("target qubit {target} is also a control")));
                    }
                    if controls[..i].contains(&c) {
                        return Err(Error::InvalidGate(format!("control qubit {c} listed twice")));
                    }
                }
                let expected = 1usize << controls.len();
                if angles.len() != expected {
                    return Err(Error::Arity(format!(
                        "{} controls need {expected} angles, got {}",
                        controls.len(),
                        angles.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Validates the gate against the register and returns the new state.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.validate(state.num_qubits)?;
        let mut amps = state.amplitudes.clone();
        self.apply_unchecked(&mut amps, state.num_qubits);
        Ok(StateVector::from_raw(amps, state.num_qubits))
    }

    pub(crate) fn apply_unchecked(&self, amps: &mut [Complex64], num_qubits: usize) {
        match self {
            Gate::SingleQubit { matrix, target } => kernel_single(amps, num_qubits, *target, matrix),
            Gate::Cnot { control, target } => kernel_cnot(amps, num_qubits, *control, *target),
            Gate::UniformlyControlledRy { angles, controls, target } => {
                kernel_ucry(amps, num_qubits, angles, controls, *target)
            }
        }
    }
}

#[inline]
pub(crate) fn bit_of(num_qubits: usize, qubit: usize) -> usize {
    1 << (num_qubits - 1 - qubit)
}

pub(crate) fn kernel_single(amps: &mut [Complex64], n: usize, target: usize, m: &Matrix2) {
    let bit = bit_of(n, target);
    for i in 0..amps.len() {
        if i & bit == 0 {
            let j = i | bit;
            let (a, b) = (amps[i], amps[j]);
            amps[i] = m[0][0] * a + m[0][1] * b;
            amps[j] = m[1][0] * a + m[1][1] * b;
        }
    }
}

/// `Ry(theta)` without building a complex matrix.
pub(crate) fn kernel_ry(amps: &mut [Complex64], n: usize, target: usize, theta: f64) {
    let (s, c) = (theta / 2.0).sin_cos();
    let bit = bit_of(n, target);
    for i in 0..amps.len() {
        if i & bit == 0 {
            let j = i | bit;
            let (a, b) = (amps[i], amps[j]);
            amps[i] = a * c - b * s;
            amps[j] = a * s + b * c;
        }
    }
}

/// `Rz(theta)` as a diagonal phase.
pub(crate) fn kernel_rz(amps: &mut [Complex64], n: usize, target: usize, theta: f64) {
    let lo = Complex64::from_polar(1.0, -theta / 2.0);
    let hi = lo.conj();
    let bit = bit_of(n, target);
    for (i, a) in amps.iter_mut().enumerate() {
        *a *= if i & bit == 0 { lo } else { hi };
    }
}

pub(crate) fn kernel_cnot(amps: &mut [Complex64], n: usize, control: usize, target: usize) {
    let cbit = bit_of(n, control);
    let tbit = bit_of(n, target);
    for i in 0..amps.len() {
        if i & cbit != 0 && i & tbit == 0 {
            amps.swap(i, i | tbit);
        }
    }
}

fn kernel_ucry(amps: &mut [Complex64], n: usize, angles: &[f64], controls: &[usize], target: usize) {
    let tbit = bit_of(n, target);
    let rotations: Vec<(f64, f64)> = angles.iter().map(|t| (t / 2.0).sin_cos()).collect();
    for i in 0..amps.len() {
        if i & tbit != 0 {
            continue;
        }
        let pattern = controls.iter().fold(0usize, |k, &c| (k << 1) | usize::from(i & bit_of(n, c) != 0));
        let (s, c) = rotations[pattern];
        let j = i | tbit;
        let (a, b) = (amps[i], amps[j]);
        amps[i] = a * c - b * s;
        amps[j] = a * s + b * c;
    }
}

pub fn apply_single_qubit_gate(state: &StateVector, matrix: &Matrix2, target: usize) -> Result<StateVector> {
    Gate::SingleQubit { matrix: *matrix, target }.apply(state)
}

pub fn apply_cnot(state: &StateVector, control: usize, target: usize) -> Result<StateVector> {
    Gate::Cnot { control, target }.apply(state)
}

pub fn apply_uniformly_controlled_ry(
    state: &StateVector,
    angles: &[f64],
    controls: &[usize],
    target: usize,
) -> Result<StateVector> {
    Gate::UniformlyControlledRy { angles: angles.to_vec(), controls: controls.to_vec(), target }.apply(state)
}

/// Exact Born-rule distribution over a subset of qubits.
///
/// Entry `k` of `probs` is the probability of reading the bitstring `k`,
/// with `qubits[0]` as its most significant bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    qubits: Vec<usize>,
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    /// Clamps float noise below zero and renormalizes sums that are off by
    /// less than [`RENORMALIZE_TOL`]; anything worse is rejected.
    pub fn new(qubits: Vec<usize>, mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << qubits.len() {
            return Err(Error::Shape { expected: 1 << qubits.len(), got: probs.len() });
        }
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -RENORMALIZE_TOL {
                return Err(Error::Normalization { norm_sqr: *p });
            }
            *p = p.max(0.0);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::Normalization { norm_sqr: total });
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { qubits, probs })
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, outcome: usize) -> f64 {
        self.probs[outcome]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub fn measure_marginal(state: &StateVector, qubits: &[usize]) -> Result<OutcomeDistribution> {
    if qubits.is_empty() {
        return Err(Error::Arity("no qubits to measure".into()));
    }
    for (i, &q) in qubits.iter().enumerate() {
        state.check_qubit(q)?;
        if qubits[..i].contains(&q) {
            return Err(Error::Arity(format!("qubit {q} listed twice")));
        }
    }
    let n = state.num_qubits;
    let bits: Vec<usize> = qubits.iter().map(|&q| bit_of(n, q)).collect();
    let mut probs = vec![0.0; 1 << qubits.len()];
    for (i, a) in state.amplitudes.iter().enumerate() {
        let k = bits.iter().fold(0usize, |k, &b| (k << 1) | usize::from(i & b != 0));
        probs[k] += a.norm_sqr();
    }
    OutcomeDistribution::new(qubits.to_vec(), probs)
}

/// Overlap magnitude `|⟨a|b⟩|`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape { expected: a.dim(), got: b.dim() });
    }
    let inner: Complex64 = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum();
    Ok(inner.norm().min(1.0))
}
