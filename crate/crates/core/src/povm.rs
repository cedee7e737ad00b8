//! The parametrized 4-outcome POVM circuit.
//!
//! Register layout (qubit 0 is the most significant bit):
//!
//! | qubit | role |
//! |-------|------|
//! | 0     | first ancilla, read out as `i₁` |
//! | 1     | second ancilla, read out as `i₂` |
//! | 2, 3  | data qubits holding the 2-qubit input |
//!
//! Gate blocks, in time order:
//!
//! 1. `U_in`: general 2-qubit unitary on the data qubits.
//! 2. `Ry(a1 | data)`: uniformly controlled `Ry` on the first ancilla,
//!    controlled by both data qubits.
//! 3. A data unitary selected by the first ancilla. It is demultiplexed as
//!    `V · Rz(a1 | data) · W`, where `V` and `W` are general 2-qubit
//!    unitaries and the middle block is a uniformly controlled `Rz` on the
//!    first ancilla.
//! 4. `Ry(a2 | a1, data)`: uniformly controlled `Ry` on the second ancilla,
//!    controlled by the first ancilla and both data qubits.
//!
//! The second stage is conditioned on the first ancilla through quantum
//! controls, so both ancillas are read at the very end. The trailing data
//! unitary that would follow block 4 is omitted since the data qubits are
//! discarded.
//!
//! General 2-qubit unitaries use the 3-CNOT form with ZYZ Euler rotations
//! on both sides (15 angles). A uniformly controlled rotation with `k`
//! controls uses the Gray-code cascade of `2^k` rotations and `2^k` CNOTs;
//! its parameters are the cascade angles, related to the per-pattern angles
//! by [`cascade_to_pattern_angles`].

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Range;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::simulator::{self, kernel_cnot, kernel_ry, kernel_rz, Gate, OutcomeDistribution, StateVector};

pub const NUM_QUBITS: usize = 4;
pub const DIM: usize = 1 << NUM_QUBITS;
pub const FIRST_ANCILLA: usize = 0;
pub const SECOND_ANCILLA: usize = 1;
pub const DATA_QUBITS: [usize; 2] = [2, 3];

/// Rotation angles in the fixed topology.
pub const NUM_PARAMS: usize = 61;

/// Measurement order handed to [`simulator::measure_marginal`]: the second
/// ancilla is the most significant bit, so the outcome index reads `i₂i₁`.
pub const READOUT_ORDER: [usize; 2] = [SECOND_ANCILLA, FIRST_ANCILLA];

/// Ancilla readout `m_{i₂i₁}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "m00")]
    M00,
    #[serde(rename = "m01")]
    M01,
    #[serde(rename = "m10")]
    M10,
    #[serde(rename = "m11")]
    M11,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::M00, Outcome::M01, Outcome::M10, Outcome::M11];

    /// Index into a distribution measured in [`READOUT_ORDER`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Builds `m_{i₂i₁}` from the two ancilla bits.
    pub fn from_bits(i2: u8, i1: u8) -> Self {
        Self::ALL[usize::from(i2 & 1) << 1 | usize::from(i1 & 1)]
    }

    /// Reading of the first ancilla.
    pub fn i1(self) -> u8 {
        (self.index() & 1) as u8
    }

    /// Reading of the second ancilla.
    pub fn i2(self) -> u8 {
        (self.index() >> 1) as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::M00 => "m00",
            Outcome::M01 => "m01",
            Outcome::M10 => "m10",
            Outcome::M11 => "m11",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Outcome::ALL.into_iter().find(|o| o.label() == s).ok_or_else(|| Error::UnmappedOutcome(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Y,
    Z,
}

/// One gate of the topology with its parameter slot, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateTemplate {
    Rotation { axis: Axis, qubit: usize, param: usize },
    Cnot { control: usize, target: usize },
}

impl GateTemplate {
    fn bind(&self, angles: &[f64]) -> Gate {
        match *self {
            GateTemplate::Rotation { axis, qubit, param } => {
                Gate::SingleQubit { matrix: rotation_matrix(axis, angles[param]), target: qubit }
            }
            GateTemplate::Cnot { control, target } => Gate::Cnot { control, target },
        }
    }

    #[inline]
    fn apply(&self, amps: &mut [Complex64], angles: &[f64]) {
        match *self {
            GateTemplate::Rotation { axis, qubit, param } => apply_rotation(amps, axis, qubit, angles[param]),
            GateTemplate::Cnot { control, target } => kernel_cnot(amps, NUM_QUBITS, control, target),
        }
    }
}

#[inline]
fn apply_rotation(amps: &mut [Complex64], axis: Axis, qubit: usize, angle: f64) {
    match axis {
        Axis::Y => kernel_ry(amps, NUM_QUBITS, qubit, angle),
        Axis::Z => kernel_rz(amps, NUM_QUBITS, qubit, angle),
    }
}

pub fn rotation_matrix(axis: Axis, angle: f64) -> simulator::Matrix2 {
    match axis {
        Axis::Y => simulator::ry(angle),
        Axis::Z => simulator::rz(angle),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockKind {
    TwoQubitUnitary { qubits: [usize; 2] },
    UniformlyControlled { axis: Axis, controls: Vec<usize>, target: usize },
}

/// A named group of consecutive gates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub kind: BlockKind,
    pub gates: Range<usize>,
    pub params: Range<usize>,
}

/// The fixed gate list with parameter slots.
#[derive(Debug, Clone)]
pub struct Topology {
    gates: Vec<GateTemplate>,
    blocks: Vec<Block>,
    num_params: usize,
}

impl Topology {
    /// The shared discriminator topology.
    pub fn discriminator() -> &'static Topology {
        static TOPOLOGY: OnceLock<Topology> = OnceLock::new();
        TOPOLOGY.get_or_init(build_topology)
    }

    pub fn gates(&self) -> &[GateTemplate] {
        &self.gates
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, GateTemplate::Cnot { .. })).count()
    }

    /// Ordered gate records, one per line:
    /// `index,block,kind,qubits,params` where multi-valued fields are
    /// space-separated (`qubits` lists control before target for CNOTs).
    pub fn to_text(&self) -> String {
        let mut out = String::from("index,block,kind,qubits,params\n");
        for block in &self.blocks {
            for i in block.gates.clone() {
                let (kind, qubits, params) = match self.gates[i] {
                    GateTemplate::Rotation { axis, qubit, param } => (
                        match axis {
                            Axis::Y => "ry",
                            Axis::Z => "rz",
                        },
                        qubit.to_string(),
                        param.to_string(),
                    ),
                    GateTemplate::Cnot { control, target } => ("cnot", format!("{control} {target}"), String::new()),
                };
                out.push_str(&format!("{i},{},{kind},{qubits},{params}\n", block.name));
            }
        }
        out
    }
}

struct TopologyBuilder {
    gates: Vec<GateTemplate>,
    blocks: Vec<Block>,
    next_param: usize,
}

impl TopologyBuilder {
    fn rotation(&mut self, axis: Axis, qubit: usize) {
        self.gates.push(GateTemplate::Rotation { axis, qubit, param: self.next_param });
        self.next_param += 1;
    }

    fn cnot(&mut self, control: usize, target: usize) {
        self.gates.push(GateTemplate::Cnot { control, target });
    }

    fn block(&mut self, name: &'static str, kind: BlockKind, body: impl FnOnce(&mut Self)) {
        let (g0, p0) = (self.gates.len(), self.next_param);
        body(self);
        self.blocks.push(Block { name, kind, gates: g0..self.gates.len(), params: p0..self.next_param });
    }

    fn euler_zyz(&mut self, qubit: usize) {
        self.rotation(Axis::Z, qubit);
        self.rotation(Axis::Y, qubit);
        self.rotation(Axis::Z, qubit);
    }

    fn two_qubit_unitary(&mut self, name: &'static str, a: usize, b: usize) {
        self.block(name, BlockKind::TwoQubitUnitary { qubits: [a, b] }, |t| {
            t.euler_zyz(a);
            t.euler_zyz(b);
            t.cnot(b, a);
            t.rotation(Axis::Z, a);
            t.rotation(Axis::Y, b);
            t.cnot(a, b);
            t.rotation(Axis::Y, b);
            t.cnot(b, a);
            t.euler_zyz(a);
            t.euler_zyz(b);
        });
    }

    fn uniformly_controlled(&mut self, name: &'static str, axis: Axis, controls: &[usize], target: usize) {
        let kind = BlockKind::UniformlyControlled { axis, controls: controls.to_vec(), target };
        self.block(name, kind, |t| {
            for control in cascade_controls(controls) {
                t.rotation(axis, target);
                t.cnot(control, target);
            }
        });
    }
}

/// Control qubit of each CNOT in the Gray-code cascade, in time order.
fn cascade_controls(controls: &[usize]) -> Vec<usize> {
    let k = controls.len();
    if k == 0 {
        return Vec::new();
    }
    let n = 1usize << k;
    (0..n)
        .map(|i| {
            let changed = gray(i) ^ gray((i + 1) % n);
            let bit = changed.trailing_zeros() as usize;
            controls[k - 1 - bit]
        })
        .collect()
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn build_topology() -> Topology {
    let [d0, d1] = DATA_QUBITS;
    let mut t = TopologyBuilder { gates: Vec::new(), blocks: Vec::new(), next_param: 0 };
    t.two_qubit_unitary("U_in", d0, d1);
    t.uniformly_controlled("Ry(a1|data)", Axis::Y, &[d0, d1], FIRST_ANCILLA);
    t.two_qubit_unitary("W", d0, d1);
    t.uniformly_controlled("Rz(a1|data)", Axis::Z, &[d0, d1], FIRST_ANCILLA);
    t.two_qubit_unitary("V", d0, d1);
    t.uniformly_controlled("Ry(a2|a1,data)", Axis::Y, &[FIRST_ANCILLA, d0, d1], SECOND_ANCILLA);
    Topology { gates: t.gates, blocks: t.blocks, num_params: t.next_param }
}

/// Per-pattern angles realized by a cascade: pattern `x` (first control as
/// most significant bit) sees `Σ_i (−1)^{popcount(x & gray(i))} φ_i`.
pub fn cascade_to_pattern_angles(cascade: &[f64]) -> Vec<f64> {
    let n = cascade.len();
    assert!(n.is_power_of_two(), "cascade length must be a power of two");
    (0..n)
        .map(|x| {
            cascade
                .iter()
                .enumerate()
                .map(|(i, phi)| if (x & gray(i)).count_ones().is_multiple_of(2) { *phi } else { -phi })
                .sum()
        })
        .collect()
}

/// Inverse of [`cascade_to_pattern_angles`].
pub fn pattern_to_cascade_angles(pattern: &[f64]) -> Vec<f64> {
    let n = pattern.len();
    assert!(n.is_power_of_two(), "pattern length must be a power of two");
    (0..n)
        .map(|i| {
            pattern
                .iter()
                .enumerate()
                .map(|(x, th)| if (x & gray(i)).count_ones().is_multiple_of(2) { *th } else { -th })
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Gate sequence of a uniformly controlled rotation lowered to CNOTs and
/// single-qubit rotations.
pub fn lower_uniformly_controlled(
    axis: Axis,
    pattern_angles: &[f64],
    controls: &[usize],
    target: usize,
) -> Result<Vec<Gate>> {
    if pattern_angles.len() != 1 << controls.len() {
        return Err(Error::Arity(format!(
            "{} controls need {} angles, got {}",
            controls.len(),
            1 << controls.len(),
            pattern_angles.len()
        )));
    }
    let cascade = pattern_to_cascade_angles(pattern_angles);
    if controls.is_empty() {
        return Ok(vec![Gate::SingleQubit { matrix: rotation_matrix(axis, cascade[0]), target }]);
    }
    Ok(cascade_controls(controls)
        .into_iter()
        .zip(cascade)
        .flat_map(|(control, phi)| {
            [Gate::SingleQubit { matrix: rotation_matrix(axis, phi), target }, Gate::Cnot { control, target }]
        })
        .collect())
}

/// Trainable rotation angles, one per rotation gate of the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CircuitParams(Vec<f64>);

impl CircuitParams {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.len() != NUM_PARAMS {
            return Err(Error::Arity(format!("circuit takes {NUM_PARAMS} angles, got {}", angles.len())));
        }
        Ok(Self(angles))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; NUM_PARAMS])
    }

    /// I.i.d. uniform angles in `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self((0..NUM_PARAMS).map(|_| rng.random_range(0.0..TAU)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for CircuitParams {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CircuitParams> for Vec<f64> {
    fn from(p: CircuitParams) -> Self {
        p.0
    }
}

/// A bound discriminator: the topology with concrete angles.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorCircuit {
    params: CircuitParams,
    gates: Vec<Gate>,
}

pub fn build_discriminator_circuit(params: CircuitParams) -> DiscriminatorCircuit {
    let gates = Topology::discriminator().gates().iter().map(|g| g.bind(params.as_slice())).collect();
    DiscriminatorCircuit { params, gates }
}

impl DiscriminatorCircuit {
    pub fn from_angles(angles: Vec<f64>) -> Result<Self> {
        Ok(build_discriminator_circuit(CircuitParams::new(angles)?))
    }

    pub fn params(&self) -> &CircuitParams {
        &self.params
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn ancilla_qubits(&self) -> [usize; 2] {
        [FIRST_ANCILLA, SECOND_ANCILLA]
    }

    pub fn data_qubits(&self) -> [usize; 2] {
        DATA_QUBITS
    }

    pub fn unitary(&self) -> CMatrix {
        gates_unitary(NUM_QUBITS, &self.gates)
    }

    /// Output state for `|0⟩|0⟩ ⊗ input`.
    pub fn run(&self, input: &StateVector) -> Result<StateVector> {
        let full = prepare(input)?;
        let mut amps = full.into_amplitudes();
        for g in &self.gates {
            g.apply_unchecked(&mut amps, NUM_QUBITS);
        }
        Ok(StateVector::from_raw(amps, NUM_QUBITS))
    }

    pub fn effects(&self) -> Effects {
        Effects::for_params(self.params.as_slice())
    }
}

/// Dense operator of a gate sequence on an `n`-qubit register.
pub fn gates_unitary(num_qubits: usize, gates: &[Gate]) -> CMatrix {
    let dim = 1 << num_qubits;
    let columns: Vec<Vec<Complex64>> = (0..dim)
        .map(|j| {
            let mut amps = StateVector::basis(num_qubits, j).expect("basis index in range").into_amplitudes();
            for g in gates {
                g.apply_unchecked(&mut amps, num_qubits);
            }
            amps
        })
        .collect();
    CMatrix::from_columns(&columns)
}

pub fn circuit_unitary(circuit: &DiscriminatorCircuit) -> CMatrix {
    circuit.unitary()
}

fn prepare(input: &StateVector) -> Result<StateVector> {
    if input.num_qubits() != 2 {
        return Err(Error::Shape { expected: 4, got: input.dim() });
    }
    let norm_sqr = input.norm_sqr();
    if (norm_sqr - 1.0).abs() > simulator::NORM_TOL {
        return Err(Error::Normalization { norm_sqr });
    }
    StateVector::basis(2, 0)?.tensor(input)
}

/// Exact Born-rule distribution over `m_{i₂i₁}`; index with
/// [`Outcome::index`].
pub fn outcome_probabilities(circuit: &DiscriminatorCircuit, input: &StateVector) -> Result<OutcomeDistribution> {
    let out = circuit.run(input)?;
    simulator::measure_marginal(&out, &READOUT_ORDER)
}

/// The four POVM effects `E_m = T_m† T_m` on the data space, where `T_m`
/// maps a data state to the output amplitudes with ancilla reading `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Effects {
    effects: [[[Complex64; 4]; 4]; 4],
}

impl Effects {
    pub fn for_params(angles: &[f64]) -> Self {
        let mut columns = initial_columns();
        let topology = Topology::discriminator();
        for g in topology.gates() {
            for col in columns.iter_mut() {
                g.apply(col, angles);
            }
        }
        Self::from_columns(&columns)
    }

    fn from_columns(columns: &[[Complex64; DIM]; 4]) -> Self {
        let mut effects = [[[Complex64::new(0.0, 0.0); 4]; 4]; 4];
        for outcome in Outcome::ALL {
            let anc = (usize::from(outcome.i1()) << 3) | (usize::from(outcome.i2()) << 2);
            let e = &mut effects[outcome.index()];
            for j in 0..4 {
                for k in j..4 {
                    let v: Complex64 = (0..4).map(|d| columns[j][anc | d].conj() * columns[k][anc | d]).sum();
                    e[j][k] = v;
                    e[k][j] = v.conj();
                }
            }
        }
        Self { effects }
    }

    pub fn effect(&self, outcome: Outcome) -> &[[Complex64; 4]; 4] {
        &self.effects[outcome.index()]
    }

    /// `⟨ψ|E_m|ψ⟩` for every outcome, clamped at zero.
    pub fn probabilities(&self, input: &[Complex64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (p, e) in out.iter_mut().zip(&self.effects) {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..4 {
                for k in 0..4 {
                    acc += input[j].conj() * e[j][k] * input[k];
                }
            }
            *p = acc.re.max(0.0);
        }
        out
    }

    /// Real-amplitude fast path: only the real parts of the effects matter.
    pub fn probabilities_real(&self, input: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (p, e) in out.iter_mut().zip(&self.effects) {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += input[j] * input[j] * e[j][j].re;
                for k in (j + 1)..4 {
                    acc += 2.0 * input[j] * input[k] * e[j][k].re;
                }
            }
            *p = acc.max(0.0);
        }
        out
    }
}

fn initial_columns() -> [[Complex64; DIM]; 4] {
    let mut columns = [[Complex64::new(0.0, 0.0); DIM]; 4];
    for (j, col) in columns.iter_mut().enumerate() {
        // Ancillas in |00⟩, data in |j⟩.
        col[j] = Complex64::new(1.0, 0.0);
    }
    columns
}

/// Effects at `angles` and at each forward-shifted `angles + step·e_j`.
///
/// States are checkpointed before every rotation so each shifted
/// evaluation only replays the suffix of the gate list.
pub fn effects_with_shifts(angles: &[f64], step: f64) -> (Effects, Vec<Effects>) {
    let topology = Topology::discriminator();
    let gates = topology.gates();
    let mut checkpoints: Vec<(usize, [[Complex64; DIM]; 4])> = Vec::with_capacity(NUM_PARAMS);
    let mut columns = initial_columns();
    for (pos, g) in gates.iter().enumerate() {
        if let GateTemplate::Rotation { .. } = g {
            checkpoints.push((pos, columns));
        }
        for col in columns.iter_mut() {
            g.apply(col, angles);
        }
    }
    let base = Effects::from_columns(&columns);

    let mut shifted = vec![None; NUM_PARAMS];
    for (pos, mut cols) in checkpoints {
        let GateTemplate::Rotation { axis, qubit, param } = gates[pos] else { unreachable!() };
        for col in cols.iter_mut() {
            apply_rotation(col, axis, qubit, angles[param] + step);
            for g in &gates[pos + 1..] {
                g.apply(col, angles);
            }
        }
        shifted[param] = Some(Effects::from_columns(&cols));
    }
    let shifted = shifted.into_iter().map(|e| e.expect("every parameter drives exactly one rotation")).collect();
    (base, shifted)
}
