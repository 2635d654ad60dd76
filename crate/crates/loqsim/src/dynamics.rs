//! Exact simulation backends.
//!
//! Everything here works on dense statevectors (capped at
//! [`STATEVECTOR_QUBIT_CAP`] qubits). The workhorse is [`evolve_diagonal`]:
//! an all-Z coupling Hamiltonian is diagonal, so time evolution is a pure
//! per-basis-state phase `e^{−i E(z) t}` and needs no Trotterization. Pulse
//! programs ([`apply_program`]) and logical circuits
//! ([`simulate_logical_circuit`]) are interpreted on top of that fast path,
//! with measurements sampled from a seeded generator.
//!
//! For cross-checks the module also carries a dense operator toolbox
//! ([`matrix_exponential`], [`evolution_operator`]) capped at
//! [`DENSE_QUBIT_CAP`] qubits, a Pauli-string Hamiltonian type with the
//! sign-flip projection that turns general two-body interactions into pure
//! ZZ form ([`zz_projection_transform`]), first-order Trotter composition
//! ([`trotter_evolve`]), and the conjugation circuits that realize many-body
//! Z interactions ([`many_body_z_exact`], [`many_body_z_commutator`]).

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compile::{CompileError, Gate1, LogicalCircuit, LogicalOp, Mat2, PulseProgram, Step};
use crate::lattice::PhysicalLayout;
use crate::par;

/// Hard cap on dense statevector size (2^24 amplitudes ≈ 256 MiB of
/// complex numbers). Larger systems must go through the logical-level or
/// closed-form paths.
pub const STATEVECTOR_QUBIT_CAP: usize = 24;

/// Cap for dense operator matrices (2^10 × 2^10).
pub const DENSE_QUBIT_CAP: usize = 10;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("{0} qubits exceed the {STATEVECTOR_QUBIT_CAP}-qubit statevector cap")]
    TooManyQubits(usize),
    #[error("amplitude vector length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("state norm deviates from 1 by {0:.3e}; refusing to renormalize")]
    NotNormalized(f64),
    #[error("qubit {0} out of range for {1} qubits")]
    BadQubit(usize, usize),
    #[error("expected {want} entries, got {got}")]
    LengthMismatch { got: usize, want: usize },
    #[error("cannot collapse onto a branch of probability {0:.3e}")]
    ImpossibleCollapse(f64),
    #[error("dense operators are capped at {DENSE_QUBIT_CAP} qubits, got {0}")]
    DenseTooLarge(usize),
    #[error("{0}")]
    BadTerm(String),
    #[error("interaction transform expects at most two-body terms, found weight {0}")]
    NotTwoBody(usize),
    #[error("coloring entry {0} is out of range or repeated")]
    BadColoring(usize),
    #[error("a unitary was requested from a circuit containing measurements")]
    UnexpectedMeasurement,
    #[error("many-body targets must be at least two distinct logical qubits")]
    BadTargets,
    #[error(transparent)]
    Circuit(#[from] CompileError),
}

/// Dense state of `m ≤ 24` qubits. Qubit `q` owns bit `q` of the basis
/// index; bit 0 is spin up (`z = +1`), bit 1 is spin down (`z = −1`).
#[derive(Debug, Clone)]
pub struct Statevector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// Computational basis state with the given bit pattern.
    pub fn from_bits(num_qubits: usize, bits: u64) -> Result<Self, DynamicsError> {
        if num_qubits > STATEVECTOR_QUBIT_CAP {
            return Err(DynamicsError::TooManyQubits(num_qubits));
        }
        let dim = 1usize << num_qubits;
        if bits >= dim as u64 {
            return Err(DynamicsError::BadTerm(format!(
                "bit pattern {bits:#b} does not fit in {num_qubits} qubits"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[bits as usize] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    /// Basis state from a spin pattern (`+1` up / `−1` down).
    pub fn from_spins(spins: &[i8]) -> Result<Self, DynamicsError> {
        let mut bits = 0u64;
        for (q, &s) in spins.iter().enumerate() {
            match s {
                1 => {}
                -1 => bits |= 1 << q,
                other => {
                    return Err(DynamicsError::BadTerm(format!(
                        "spin values must be ±1, got {other}"
                    )))
                }
            }
        }
        Self::from_bits(spins.len(), bits)
    }

    /// Wrap an amplitude vector. The length must be a power of two and the
    /// norm within 1e−6 of 1; the vector is renormalized exactly on entry.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, DynamicsError> {
        if !amps.len().is_power_of_two() {
            return Err(DynamicsError::NotPowerOfTwo(amps.len()));
        }
        let num_qubits = amps.len().trailing_zeros() as usize;
        if num_qubits > STATEVECTOR_QUBIT_CAP {
            return Err(DynamicsError::TooManyQubits(num_qubits));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(DynamicsError::NotNormalized((norm - 1.0).abs()));
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(Self { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Complex64 {
        assert_eq!(self.num_qubits, other.num_qubits, "qubit counts differ");
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |⟨self|other⟩|² — insensitive to global phase.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Apply a single-qubit unitary in place.
    pub fn apply_single(&mut self, qubit: usize, m: &Mat2) -> Result<(), DynamicsError> {
        if qubit >= self.num_qubits {
            return Err(DynamicsError::BadQubit(qubit, self.num_qubits));
        }
        let stride = 1usize << qubit;
        let dim = self.amps.len();
        let mut idx = 0;
        while idx < dim {
            if idx & stride == 0 {
                let partner = idx | stride;
                let a0 = self.amps[idx];
                let a1 = self.amps[partner];
                self.amps[idx] = m[(0, 0)] * a0 + m[(0, 1)] * a1;
                self.amps[partner] = m[(1, 0)] * a0 + m[(1, 1)] * a1;
            }
            idx += 1;
        }
        Ok(())
    }

    /// Probability of finding `qubit` spin-down (bit 1).
    pub fn probability_down(&self, qubit: usize) -> Result<f64, DynamicsError> {
        if qubit >= self.num_qubits {
            return Err(DynamicsError::BadQubit(qubit, self.num_qubits));
        }
        let mask = 1usize << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Project `qubit` onto the chosen branch and renormalize.
    pub fn collapse(&mut self, qubit: usize, down: bool) -> Result<(), DynamicsError> {
        let p_down = self.probability_down(qubit)?;
        let p = if down { p_down } else { 1.0 - p_down };
        if p < 1e-12 {
            return Err(DynamicsError::ImpossibleCollapse(p));
        }
        let mask = 1usize << qubit;
        let keep_set = if down { mask } else { 0 };
        let scale = 1.0 / p.sqrt();
        for (idx, a) in self.amps.iter_mut().enumerate() {
            if idx & mask == keep_set {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(())
    }
}

/// Shared core: `e^{−i t Σ w_ab Z_a Z_b}` for an explicit weighted pair list.
fn evolve_zz_pairs(
    state: &Statevector,
    pairs: &[(usize, usize, f64)],
    t: f64,
) -> Result<Statevector, DynamicsError> {
    let n = state.num_qubits;
    if !t.is_finite() {
        return Err(DynamicsError::BadTerm(format!("non-finite evolution time {t}")));
    }
    let mut weighted: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
    for &(a, b, w) in pairs {
        if a >= n {
            return Err(DynamicsError::BadQubit(a, n));
        }
        if b >= n {
            return Err(DynamicsError::BadQubit(b, n));
        }
        if a == b {
            return Err(DynamicsError::BadTerm(format!("self coupling on qubit {a}")));
        }
        if !w.is_finite() {
            return Err(DynamicsError::BadTerm(format!("non-finite coupling {w}")));
        }
        if w != 0.0 {
            weighted.push(((1usize << a) | (1usize << b), w));
        }
    }
    let amps = par::map_indexed(state.amps.len(), |idx| {
        let mut energy = 0.0;
        for &(mask, w) in &weighted {
            // z_a z_b = ±1 by the parity of the two masked bits.
            let sign = 1.0 - 2.0 * ((idx & mask).count_ones() & 1) as f64;
            energy += w * sign;
        }
        state.amps[idx] * Complex64::from_polar(1.0, -energy * t)
    });
    Ok(Statevector { num_qubits: n, amps })
}

/// Evolve under the layout's full coupling Hamiltonian with a spin profile:
/// each basis state picks up `e^{−i E(z) t}` with
/// `E(z) = Σ f_ab s_a s_b z_a z_b`. Exact — the Hamiltonian is diagonal.
pub fn evolve_diagonal(
    state: &Statevector,
    layout: &PhysicalLayout,
    t: f64,
    profile: &[f64],
) -> Result<Statevector, DynamicsError> {
    let n = state.num_qubits;
    if layout.len() != n {
        return Err(DynamicsError::LengthMismatch { got: layout.len(), want: n });
    }
    if profile.len() != n {
        return Err(DynamicsError::LengthMismatch { got: profile.len(), want: n });
    }
    for &s in profile {
        if !s.is_finite() || s.abs() > 1.0 + 1e-12 {
            return Err(DynamicsError::BadTerm(format!(
                "profile component {s} outside [−1, 1]"
            )));
        }
    }
    let pairs: Vec<(usize, usize, f64)> = layout
        .coupled_pairs()
        .into_iter()
        .map(|(a, b, f)| (a, b, f * profile[a] * profile[b]))
        .collect();
    evolve_zz_pairs(state, &pairs, t)
}

/// Pairwise couplings between logical qubits: `H = Σ λ_ij Z_i Z_j`.
#[derive(Debug, Clone)]
pub struct LogicalHamiltonian {
    num_qubits: usize,
    pairs: Vec<(usize, usize, f64)>,
}

impl LogicalHamiltonian {
    /// Pairs are stored canonically (`i < j`); duplicates and self-couplings
    /// are rejected.
    pub fn from_pairs(
        num_qubits: usize,
        pairs: Vec<(usize, usize, f64)>,
    ) -> Result<Self, DynamicsError> {
        let mut canonical: Vec<(usize, usize, f64)> = Vec::with_capacity(pairs.len());
        for (a, b, w) in pairs {
            if a >= num_qubits {
                return Err(DynamicsError::BadQubit(a, num_qubits));
            }
            if b >= num_qubits {
                return Err(DynamicsError::BadQubit(b, num_qubits));
            }
            if a == b {
                return Err(DynamicsError::BadTerm(format!("self coupling on qubit {a}")));
            }
            if !w.is_finite() {
                return Err(DynamicsError::BadTerm(format!("non-finite coupling {w}")));
            }
            let key = (a.min(b), a.max(b));
            if canonical.iter().any(|&(i, j, _)| (i, j) == key) {
                return Err(DynamicsError::BadTerm(format!(
                    "duplicate coupling between {} and {}",
                    key.0, key.1
                )));
            }
            canonical.push((key.0, key.1, w));
        }
        canonical.sort_by_key(|&(i, j, _)| (i, j));
        Ok(Self { num_qubits, pairs: canonical })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }
}

/// Logical-level counterpart of [`evolve_diagonal`].
pub fn evolve_logical(
    state: &Statevector,
    h: &LogicalHamiltonian,
    t: f64,
) -> Result<Statevector, DynamicsError> {
    if h.num_qubits != state.num_qubits {
        return Err(DynamicsError::LengthMismatch {
            got: h.num_qubits,
            want: state.num_qubits,
        });
    }
    evolve_zz_pairs(state, &h.pairs, t)
}

/// Result of running a pulse program: the final state plus every recorded
/// measurement outcome (`+1` up / `−1` down) in program order.
#[derive(Debug, Clone)]
pub struct ProgramRun {
    pub state: Statevector,
    pub outcomes: Vec<i8>,
}

/// Execute a pulse program on a physical layout. Evolution steps use the
/// diagonal fast path with the step's spin profile (the time-averaged effect
/// of its flip schedule); measurements sample Born outcomes from a ChaCha
/// generator seeded with `seed`, so runs are reproducible.
pub fn apply_program(
    state: &Statevector,
    layout: &PhysicalLayout,
    program: &PulseProgram,
    seed: u64,
) -> Result<ProgramRun, DynamicsError> {
    if program.num_qubits() != state.num_qubits {
        return Err(DynamicsError::LengthMismatch {
            got: program.num_qubits(),
            want: state.num_qubits,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = ProgramRun { state: state.clone(), outcomes: Vec::new() };
    for step in program.steps() {
        exec_step(&mut run, layout, step, &mut rng)?;
    }
    Ok(run)
}

fn exec_step(
    run: &mut ProgramRun,
    layout: &PhysicalLayout,
    step: &Step,
    rng: &mut ChaCha8Rng,
) -> Result<(), DynamicsError> {
    match step {
        Step::Evolve { duration, profile } => {
            run.state = evolve_diagonal(&run.state, layout, *duration, profile)?;
        }
        Step::Gate { qubit, gate } => {
            run.state.apply_single(*qubit, &gate.matrix())?;
        }
        Step::MeasureZ { qubit } => {
            let p_down = run.state.probability_down(*qubit)?;
            let down = rng.gen::<f64>() < p_down;
            run.state.collapse(*qubit, down)?;
            run.outcomes.push(if down { -1 } else { 1 });
        }
        Step::Conditional { measurement, when_down, when_up } => {
            // Program validation guarantees the reference resolves and the
            // branches hold gates only.
            let branch = if run.outcomes[*measurement] == -1 { when_down } else { when_up };
            for inner in branch {
                exec_step(run, layout, inner, rng)?;
            }
        }
    }
    Ok(())
}

/// Run a logical-level circuit on a state with one amplitude pair per
/// logical qubit. `PrepGhz` acts as a Hadamard (its physical meaning on the
/// reference state), `Measure` rotates into the given basis, samples a Z
/// outcome (`+1` ↦ first basis column) and leaves the qubit collapsed in the
/// rotated frame.
pub fn simulate_logical_circuit(
    state: &Statevector,
    circuit: &LogicalCircuit,
    seed: u64,
) -> Result<ProgramRun, DynamicsError> {
    if circuit.num_qubits() != state.num_qubits {
        return Err(DynamicsError::LengthMismatch {
            got: circuit.num_qubits(),
            want: state.num_qubits,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = ProgramRun { state: state.clone(), outcomes: Vec::new() };
    for op in circuit.ops() {
        match op {
            LogicalOp::PrepGhz { qubit } => {
                run.state.apply_single(*qubit, &Gate1::H.matrix())?;
            }
            LogicalOp::Unitary { qubit, matrix } => {
                run.state.apply_single(*qubit, matrix)?;
            }
            LogicalOp::Zrot { qubit, phi } => {
                run.state.apply_single(*qubit, &Gate1::Zrot(*phi).matrix())?;
            }
            LogicalOp::X { qubit } => {
                run.state.apply_single(*qubit, &Gate1::X.matrix())?;
            }
            LogicalOp::Cx { control, target } => {
                let c = 1usize << *control;
                let t = 1usize << *target;
                let amps = (0..run.state.amps.len())
                    .map(|idx| run.state.amps[if idx & c != 0 { idx ^ t } else { idx }])
                    .collect();
                run.state = Statevector { num_qubits: run.state.num_qubits, amps };
            }
            LogicalOp::Evolve { couplings, duration } => {
                run.state = evolve_zz_pairs(&run.state, couplings, *duration)?;
            }
            LogicalOp::Measure { qubit, basis } => {
                run.state.apply_single(*qubit, &basis.adjoint())?;
                let p_down = run.state.probability_down(*qubit)?;
                let down = rng.gen::<f64>() < p_down;
                run.state.collapse(*qubit, down)?;
                run.outcomes.push(if down { -1 } else { 1 });
            }
        }
    }
    Ok(run)
}

/// Dense unitary realized by a measurement-free logical circuit.
pub fn logical_circuit_unitary(circuit: &LogicalCircuit) -> Result<DMatrix<Complex64>, DynamicsError> {
    let n = circuit.num_qubits();
    if n > DENSE_QUBIT_CAP {
        return Err(DynamicsError::DenseTooLarge(n));
    }
    if circuit.ops().iter().any(|op| matches!(op, LogicalOp::Measure { .. })) {
        return Err(DynamicsError::UnexpectedMeasurement);
    }
    let dim = 1usize << n;
    let mut u = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let basis = Statevector::from_bits(n, col as u64)?;
        let run = simulate_logical_circuit(&basis, circuit, 0)?;
        for row in 0..dim {
            u[(row, col)] = run.state.amps[row];
        }
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Pauli strings and the sign-flip projection onto ZZ form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// One product term: a real coefficient times Pauli factors on distinct
/// qubits (identity elsewhere).
#[derive(Debug, Clone)]
pub struct PauliTerm {
    pub coefficient: f64,
    /// Sorted by qubit index.
    pub factors: Vec<(usize, Pauli)>,
}

/// Real linear combination of Pauli strings; holds general two-body
/// couplings `f_ab σ_a σ_b` and local fields `g_a σ_a`.
#[derive(Debug, Clone)]
pub struct PauliStringHamiltonian {
    num_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl PauliStringHamiltonian {
    pub fn new(num_qubits: usize) -> Self {
        Self { num_qubits, terms: Vec::new() }
    }

    pub fn add_term(
        &mut self,
        coefficient: f64,
        factors: &[(usize, Pauli)],
    ) -> Result<(), DynamicsError> {
        if !coefficient.is_finite() {
            return Err(DynamicsError::BadTerm(format!(
                "non-finite coefficient {coefficient}"
            )));
        }
        let mut sorted = factors.to_vec();
        sorted.sort_by_key(|&(q, _)| q);
        for pair in sorted.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(DynamicsError::BadTerm(format!(
                    "term acts on qubit {} twice",
                    pair[0].0
                )));
            }
        }
        for &(q, _) in &sorted {
            if q >= self.num_qubits {
                return Err(DynamicsError::BadQubit(q, self.num_qubits));
            }
        }
        self.terms.push(PauliTerm { coefficient, factors: sorted });
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// Dense Hermitian matrix (small systems only).
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>, DynamicsError> {
        if self.num_qubits > DENSE_QUBIT_CAP {
            return Err(DynamicsError::DenseTooLarge(self.num_qubits));
        }
        let dim = 1usize << self.num_qubits;
        let mut h = DMatrix::zeros(dim, dim);
        for term in &self.terms {
            let mut flip = 0usize;
            for &(q, p) in &term.factors {
                if matches!(p, Pauli::X | Pauli::Y) {
                    flip |= 1 << q;
                }
            }
            for col in 0..dim {
                let mut phase = Complex64::new(term.coefficient, 0.0);
                for &(q, p) in &term.factors {
                    let bit = (col >> q) & 1;
                    phase *= match (p, bit) {
                        (Pauli::X, _) => Complex64::new(1.0, 0.0),
                        (Pauli::Y, 0) => Complex64::new(0.0, 1.0),
                        (Pauli::Y, _) => Complex64::new(0.0, -1.0),
                        (Pauli::Z, 0) => Complex64::new(1.0, 0.0),
                        (Pauli::Z, _) => Complex64::new(-1.0, 0.0),
                    };
                }
                h[(col ^ flip, col)] += phase;
            }
        }
        Ok(h)
    }
}

/// How to carve the qubits into sign-flip classes.
#[derive(Debug, Clone)]
pub enum SplitStrategy {
    /// Halve `[0, n)` recursively; one Z-flip generator per recursion depth
    /// (odd blocks split ⌈len/2⌉ / ⌊len/2⌋).
    RecursiveHalving,
    /// One generator flipping exactly the listed qubits — enough when the
    /// interaction graph is bipartite and the list is one color class.
    TwoColoring(Vec<usize>),
}

/// Outcome of the projection: the surviving Hamiltonian, the full averaging
/// group as qubit sets (each set is one Z-product conjugation), and the
/// uniform weight `1 / |group|`.
#[derive(Debug, Clone)]
pub struct ZzProjection {
    pub hamiltonian: PauliStringHamiltonian,
    pub conjugation_sets: Vec<Vec<usize>>,
    pub weight: f64,
}

/// Average a two-body-plus-local Hamiltonian over a group of Z-product
/// conjugations so that only terms commuting with every generator survive.
///
/// With the halving generators every cross pair is separated at the depth
/// where the two qubits land in different half-blocks, so every XX/XY/YY
/// cross term acquires a sign and cancels; ZZ terms and local Z fields
/// commute with everything and pass through with unchanged coefficients.
/// Terms with an odd number of X/Y factors (local X/Y fields, mixed XZ
/// pairs) are caught by one extra all-qubit generator, added only when such
/// a term is present.
pub fn zz_projection_transform(
    h: &PauliStringHamiltonian,
    strategy: &SplitStrategy,
) -> Result<ZzProjection, DynamicsError> {
    let n = h.num_qubits;
    if n == 0 || n > 64 {
        return Err(DynamicsError::BadTerm(format!(
            "projection supports 1..=64 qubits, got {n}"
        )));
    }
    for term in &h.terms {
        if term.factors.len() > 2 {
            return Err(DynamicsError::NotTwoBody(term.factors.len()));
        }
    }

    let mut generators: Vec<u64> = Vec::new();
    match strategy {
        SplitStrategy::RecursiveHalving => {
            let mut blocks = vec![(0usize, n)];
            while blocks.iter().any(|&(s, e)| e - s >= 2) {
                let mut mask = 0u64;
                let mut next = Vec::new();
                for &(s, e) in &blocks {
                    if e - s < 2 {
                        continue;
                    }
                    let mid = s + (e - s).div_ceil(2);
                    for q in s..mid {
                        mask |= 1 << q;
                    }
                    next.push((s, mid));
                    next.push((mid, e));
                }
                generators.push(mask);
                blocks = next;
            }
        }
        SplitStrategy::TwoColoring(class) => {
            let mut mask = 0u64;
            for &q in class {
                if q >= n || mask & (1 << q) != 0 {
                    return Err(DynamicsError::BadColoring(q));
                }
                mask |= 1 << q;
            }
            generators.push(mask);
        }
    }
    let any_odd = h.terms.iter().any(|t| {
        t.factors.iter().filter(|(_, p)| matches!(p, Pauli::X | Pauli::Y)).count() % 2 == 1
    });
    if any_odd {
        generators.push((1u64 << n) - 1);
    }

    // A term survives the average iff it commutes with every generator:
    // even overlap between its X/Y support and each flip mask.
    let mut projected = PauliStringHamiltonian::new(n);
    for term in &h.terms {
        let mut xy = 0u64;
        for &(q, p) in &term.factors {
            if matches!(p, Pauli::X | Pauli::Y) {
                xy |= 1 << q;
            }
        }
        if generators.iter().all(|&g| (xy & g).count_ones() % 2 == 0) {
            projected.add_term(term.coefficient, &term.factors)?;
        }
    }

    // Closure of the generators under composition (they commute and square
    // to identity, so this is all subset-XORs).
    let mut group: BTreeSet<u64> = BTreeSet::new();
    group.insert(0);
    for &g in &generators {
        let extra: Vec<u64> = group.iter().map(|&m| m ^ g).collect();
        group.extend(extra);
    }
    let conjugation_sets: Vec<Vec<usize>> = group
        .iter()
        .map(|&m| (0..n).filter(|&q| m & (1 << q) != 0).collect())
        .collect();
    let weight = 1.0 / conjugation_sets.len() as f64;
    Ok(ZzProjection { hamiltonian: projected, conjugation_sets, weight })
}

// ---------------------------------------------------------------------------
// Trotter composition
// ---------------------------------------------------------------------------

/// One exactly-integrable piece of a Hamiltonian. Pair lists carry
/// `(i, j, coefficient)`; field lists carry one coefficient per qubit.
#[derive(Debug, Clone)]
pub enum TrotterTerm {
    ZzPairs(Vec<(usize, usize, f64)>),
    XxPairs(Vec<(usize, usize, f64)>),
    YyPairs(Vec<(usize, usize, f64)>),
    FieldX(Vec<f64>),
    FieldZ(Vec<f64>),
}

/// First-order Trotter product: `k` slices, each applying every term's exact
/// evolution for `T/k`. XX (YY) blocks are handled by conjugating the ZZ
/// fast path with Hadamards (X-axis quarter rotations) on the involved
/// qubits — the pairs within one block commute, so each slice is exact for
/// its own term.
pub fn trotter_evolve(
    state: &Statevector,
    terms: &[TrotterTerm],
    total_time: f64,
    k: usize,
) -> Result<Statevector, DynamicsError> {
    if k == 0 {
        return Err(DynamicsError::BadTerm("slice count must be at least 1".into()));
    }
    let dt = total_time / k as f64;
    let mut current = state.clone();
    for _ in 0..k {
        for term in terms {
            current = apply_trotter_slice(&current, term, dt)?;
        }
    }
    Ok(current)
}

fn involved_qubits(pairs: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut qs: Vec<usize> = pairs.iter().flat_map(|&(a, b, _)| [a, b]).collect();
    qs.sort_unstable();
    qs.dedup();
    qs
}

fn apply_trotter_slice(
    state: &Statevector,
    term: &TrotterTerm,
    dt: f64,
) -> Result<Statevector, DynamicsError> {
    match term {
        TrotterTerm::ZzPairs(pairs) => evolve_zz_pairs(state, pairs, dt),
        TrotterTerm::XxPairs(pairs) => {
            let h = Gate1::H.matrix();
            let mut s = state.clone();
            for &q in &involved_qubits(pairs) {
                s.apply_single(q, &h)?;
            }
            let mut s = evolve_zz_pairs(&s, pairs, dt)?;
            for &q in &involved_qubits(pairs) {
                s.apply_single(q, &h)?;
            }
            Ok(s)
        }
        TrotterTerm::YyPairs(pairs) => {
            let v = x_quarter_rotation();
            let vd = v.adjoint();
            let mut s = state.clone();
            for &q in &involved_qubits(pairs) {
                s.apply_single(q, &vd)?;
            }
            let mut s = evolve_zz_pairs(&s, pairs, dt)?;
            for &q in &involved_qubits(pairs) {
                s.apply_single(q, &v)?;
            }
            Ok(s)
        }
        TrotterTerm::FieldX(coeffs) => {
            if coeffs.len() != state.num_qubits {
                return Err(DynamicsError::LengthMismatch {
                    got: coeffs.len(),
                    want: state.num_qubits,
                });
            }
            let mut s = state.clone();
            for (q, &g) in coeffs.iter().enumerate() {
                if g != 0.0 {
                    s.apply_single(q, &x_rotation(g * dt))?;
                }
            }
            Ok(s)
        }
        TrotterTerm::FieldZ(coeffs) => {
            if coeffs.len() != state.num_qubits {
                return Err(DynamicsError::LengthMismatch {
                    got: coeffs.len(),
                    want: state.num_qubits,
                });
            }
            let mut s = state.clone();
            for (q, &g) in coeffs.iter().enumerate() {
                if g != 0.0 {
                    let m = Mat2::new(
                        Complex64::from_polar(1.0, -g * dt),
                        Complex64::new(0.0, 0.0),
                        Complex64::new(0.0, 0.0),
                        Complex64::from_polar(1.0, g * dt),
                    );
                    s.apply_single(q, &m)?;
                }
            }
            Ok(s)
        }
    }
}

// ---------------------------------------------------------------------------
// Dense operator toolbox
// ---------------------------------------------------------------------------

/// `e^M` by scaling-and-squaring with a Taylor kernel. Intended for the
/// small (≤ 2^10) matrices the oracles use.
pub fn matrix_exponential(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let dim = m.nrows();
    assert_eq!(dim, m.ncols(), "matrix must be square");
    // Crude spectral bound: n · max |entry|. Scale below 1 so the Taylor
    // series converges fast.
    let bound = m.iter().map(|x| x.norm()).fold(0.0, f64::max) * dim as f64;
    let squarings = if bound > 1.0 { bound.log2().ceil() as u32 } else { 0 };
    let scaled = m.map(|x| x / 2f64.powi(squarings as i32));
    let mut result: DMatrix<Complex64> = DMatrix::identity(dim, dim);
    let mut term: DMatrix<Complex64> = DMatrix::identity(dim, dim);
    for order in 1..=40u32 {
        term = (&term * &scaled) / Complex64::new(f64::from(order), 0.0);
        result += &term;
        if term.iter().map(|x| x.norm()).sum::<f64>() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `e^{−i H t}` for a dense Hermitian `H`.
pub fn evolution_operator(h: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
    matrix_exponential(&h.map(|x| x * Complex64::new(0.0, -t)))
}

/// Frobenius distance between two unitaries minimized over a global phase:
/// `√(2D − 2|tr(A†B)|)` for dimension `D`.
pub fn phase_aligned_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let dim = a.nrows() as f64;
    let overlap: Complex64 = a.adjoint().iter_product_trace(b);
    (2.0 * dim - 2.0 * overlap.norm()).max(0.0).sqrt()
}

/// Small helper trait so the trace of `A·B` avoids forming the product.
trait TraceProduct {
    fn iter_product_trace(&self, other: &DMatrix<Complex64>) -> Complex64;
}

impl TraceProduct for DMatrix<Complex64> {
    fn iter_product_trace(&self, other: &DMatrix<Complex64>) -> Complex64 {
        let mut tr = Complex64::new(0.0, 0.0);
        for i in 0..self.nrows() {
            for k in 0..self.ncols() {
                tr += self[(i, k)] * other[(k, i)];
            }
        }
        tr
    }
}

/// Dense operator acting as the given single-qubit matrices on their qubits
/// and identity elsewhere (qubit 0 = least significant bit).
fn product_operator(n: usize, ops: &[(usize, Mat2)]) -> DMatrix<Complex64> {
    let mut acc = DMatrix::identity(1, 1);
    for q in (0..n).rev() {
        let factor = match ops.iter().find(|&&(oq, _)| oq == q) {
            Some((_, m)) => DMatrix::from_fn(2, 2, |r, c| m[(r, c)]),
            None => DMatrix::identity(2, 2),
        };
        acc = acc.kronecker(&factor);
    }
    acc
}

// ---------------------------------------------------------------------------
// Many-body Z constructions
// ---------------------------------------------------------------------------

fn z_matrix() -> Mat2 {
    Mat2::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(-1.0, 0.0),
    )
}

/// `e^{iπX/4} = (I + iX)/√2`, the rotation with `V Z V† = Y`.
fn x_quarter_rotation() -> Mat2 {
    let d = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let o = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    Mat2::new(d, o, o, d)
}

/// `e^{−iθX} = cos θ · I − i sin θ · X`.
fn x_rotation(theta: f64) -> Mat2 {
    let c = Complex64::new(theta.cos(), 0.0);
    let s = Complex64::new(0.0, -theta.sin());
    Mat2::new(c, s, s, c)
}

/// Which pivot operator the star conjugation produces in
/// `U e^{−iωX} U† = e^{−iω A Z⋯Z}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotAxis {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl PivotAxis {
    pub fn matrix(self) -> Mat2 {
        let x = Gate1::X.matrix();
        let y = Mat2::new(
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, 0.0),
        );
        match self {
            PivotAxis::PlusX => x,
            PivotAxis::MinusX => -x,
            PivotAxis::PlusY => y,
            PivotAxis::MinusY => -y,
        }
    }

    fn all() -> [PivotAxis; 4] {
        [PivotAxis::PlusX, PivotAxis::MinusX, PivotAxis::PlusY, PivotAxis::MinusY]
    }
}

/// A compiled many-body Z interaction `e^{−iω Z⋯Z}` over the target set.
///
/// `raw_circuit` is the bare conjugation, whose pivot operator is
/// `pivot_axis` (one of ±X, ±Y) rather than Z; `circuit` wraps it with one
/// extra pivot rotation so the generator really is a Z product.
#[derive(Debug, Clone)]
pub struct ManyBodyZ {
    pub circuit: LogicalCircuit,
    pub raw_circuit: LogicalCircuit,
    pub pivot_axis: PivotAxis,
}

fn star_evolve(targets: &[usize], weight: f64, duration: f64) -> LogicalOp {
    let pivot = targets[0];
    let couplings = targets[1..].iter().map(|&j| (pivot, j, weight)).collect();
    LogicalOp::Evolve { couplings, duration }
}

/// `U† · e^{−iωX_pivot} · U` in application order, with
/// `U = e^{−i(π/4) Σ Z_pivot Z_j}` realized as a star-coupling window.
fn raw_many_body_ops(targets: &[usize], omega: f64, lambda: f64) -> Vec<LogicalOp> {
    let duration = PI / (4.0 * lambda);
    vec![
        star_evolve(targets, -lambda, duration),
        LogicalOp::Unitary { qubit: targets[0], matrix: x_rotation(omega) },
        star_evolve(targets, lambda, duration),
    ]
}

/// Determine the pivot axis by direct computation on a dense representative
/// (the axis only depends on the target count, with period four).
fn pin_pivot_axis(num_targets: usize) -> PivotAxis {
    let n_rep = 2 + (num_targets - 2) % 4;
    let rep_targets: Vec<usize> = (0..n_rep).collect();
    let probe_omega = 0.3;
    let circuit = LogicalCircuit::new(n_rep, raw_many_body_ops(&rep_targets, probe_omega, 0.8))
        .expect("representative circuit is well-formed");
    let u = logical_circuit_unitary(&circuit).expect("representative is small");
    for axis in PivotAxis::all() {
        let mut ops = vec![(0usize, axis.matrix())];
        for q in 1..n_rep {
            ops.push((q, z_matrix()));
        }
        let target = evolution_operator(&product_operator(n_rep, &ops), probe_omega);
        if (&u - &target).norm() < 1e-9 {
            return axis;
        }
    }
    unreachable!("star conjugation always lands on ±X or ±Y");
}

/// Single-qubit rotation `W` with `W · axis · W† = Z`.
fn axis_to_z_rotation(axis: PivotAxis) -> Mat2 {
    let h = Gate1::H.matrix();
    let x = Gate1::X.matrix();
    let z = z_matrix();
    let v = x_quarter_rotation();
    let vd = v.adjoint();
    let candidates =
        [h, h * x, h * z, v, v * x, v * z, vd, vd * x, vd * z];
    let a = axis.matrix();
    for w in candidates {
        if (w * a * w.adjoint() - z).norm() < 1e-9 {
            return w;
        }
    }
    unreachable!("±X and ±Y all rotate onto Z");
}

/// Build the exact many-body Z evolution `e^{−iω Z⋯Z}` on `targets`
/// (first entry = pivot), given the equal star coupling `lambda` the
/// pattern layer realizes between the pivot and each other target. The
/// conjugation windows last `π/(4λ)` each regardless of `ω`.
pub fn many_body_z_exact(
    num_logical: usize,
    targets: &[usize],
    omega: f64,
    lambda: f64,
) -> Result<ManyBodyZ, DynamicsError> {
    if targets.len() < 2 {
        return Err(DynamicsError::BadTargets);
    }
    let mut seen = BTreeSet::new();
    for &t in targets {
        if t >= num_logical || !seen.insert(t) {
            return Err(DynamicsError::BadTargets);
        }
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(DynamicsError::BadTerm(format!(
            "star coupling must be positive, got {lambda}"
        )));
    }
    if !omega.is_finite() {
        return Err(DynamicsError::BadTerm(format!("non-finite angle {omega}")));
    }
    let raw_ops = raw_many_body_ops(targets, omega, lambda);
    let raw_circuit = LogicalCircuit::new(num_logical, raw_ops.clone())?;
    let pivot_axis = pin_pivot_axis(targets.len());
    let w = axis_to_z_rotation(pivot_axis);
    let pivot = targets[0];
    let mut ops = vec![LogicalOp::Unitary { qubit: pivot, matrix: w.adjoint() }];
    ops.extend(raw_ops);
    ops.push(LogicalOp::Unitary { qubit: pivot, matrix: w });
    let circuit = LogicalCircuit::new(num_logical, ops)?;
    Ok(ManyBodyZ { circuit, raw_circuit, pivot_axis })
}

/// Group-commutator circuit approximating a three-body Z interaction:
/// `e^{iH_A t} e^{iH_B t} e^{−iH_A t} e^{−iH_B t} ≈ e^{−2iλμt² Z₁Z₂Z₃}`
/// with `H_A = λ X₁Z₂` and `H_B = μ Y₁Z₃` on three logical qubits. Both
/// factors come from ZZ windows conjugated on the shared first qubit.
pub fn many_body_z_commutator(
    lambda: f64,
    mu: f64,
    t: f64,
) -> Result<LogicalCircuit, DynamicsError> {
    if !lambda.is_finite() || !mu.is_finite() {
        return Err(DynamicsError::BadTerm("non-finite coupling".into()));
    }
    if !t.is_finite() || t <= 0.0 {
        return Err(DynamicsError::BadTerm(format!(
            "commutator time must be positive, got {t}"
        )));
    }
    let h = Gate1::H.matrix();
    let v = x_quarter_rotation();
    let vd = v.adjoint();
    // e^{∓iλ X₀Z₁ t}: Hadamard-conjugated ZZ window on qubits (0, 1).
    let exp_a = |sign: f64| {
        vec![
            LogicalOp::Unitary { qubit: 0, matrix: h },
            LogicalOp::Evolve { couplings: vec![(0, 1, sign * lambda)], duration: t },
            LogicalOp::Unitary { qubit: 0, matrix: h },
        ]
    };
    // e^{∓iμ Y₀Z₂ t}: the same window on (0, 2) conjugated into the Y axis.
    let exp_b = |sign: f64| {
        vec![
            LogicalOp::Unitary { qubit: 0, matrix: vd },
            LogicalOp::Evolve { couplings: vec![(0, 2, sign * mu)], duration: t },
            LogicalOp::Unitary { qubit: 0, matrix: v },
        ]
    };
    let mut ops = exp_b(1.0);
    ops.extend(exp_a(1.0));
    ops.extend(exp_b(-1.0));
    ops.extend(exp_a(-1.0));
    Ok(LogicalCircuit::new(3, ops)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{compile_cx, compile_ghz_prep, CxTree};
    use crate::lattice::{all_interaction_matrices, effective_coupling, Grouping};
    use crate::schedule::sequential_schedule;
    use nalgebra::DVector;

    fn line(n: usize, cutoff: Option<f64>) -> PhysicalLayout {
        let positions = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
        PhysicalLayout::new(positions, 1.0, 1.0, cutoff, 1.0).unwrap()
    }

    fn state_from(mut amps: Vec<Complex64>) -> Statevector {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        Statevector::from_amplitudes(amps).unwrap()
    }

    fn random_state(m: usize, seed: u64) -> Statevector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        state_from(
            (0..1usize << m)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect(),
        )
    }

    fn apply_dense(u: &DMatrix<Complex64>, state: &Statevector) -> Statevector {
        let v = DVector::from_column_slice(state.amplitudes());
        let w = u * v;
        Statevector::from_amplitudes(w.iter().copied().collect()).unwrap()
    }

    fn plus_state(n: usize) -> Statevector {
        let dim = 1usize << n;
        state_from(vec![Complex64::new(1.0, 0.0); dim])
    }

    /// Operator matrix of a state map, built column by column.
    fn operator_of(n: usize, mut f: impl FnMut(&Statevector) -> Statevector) -> DMatrix<Complex64> {
        let dim = 1usize << n;
        let mut u = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let out = f(&Statevector::from_bits(n, col as u64).unwrap());
            for row in 0..dim {
                u[(row, col)] = out.amplitudes()[row];
            }
        }
        u
    }

    fn zz_dense(n: usize, a: usize, b: usize) -> DMatrix<Complex64> {
        product_operator(n, &[(a, z_matrix()), (b, z_matrix())])
    }

    #[test]
    fn constructors_and_caps() {
        let s = Statevector::from_bits(3, 0b101).unwrap();
        assert_eq!(s.num_qubits(), 3);
        assert!((s.amplitude(0b101).re - 1.0).abs() < 1e-15);
        let t = Statevector::from_spins(&[-1, 1, -1]).unwrap();
        assert!(t.fidelity(&s) > 1.0 - 1e-15);
        assert!(matches!(
            Statevector::from_bits(25, 0),
            Err(DynamicsError::TooManyQubits(25))
        ));
        assert!(matches!(
            Statevector::from_amplitudes(vec![Complex64::new(1.0, 0.0); 3]),
            Err(DynamicsError::NotPowerOfTwo(3))
        ));
        assert!(matches!(
            Statevector::from_amplitudes(vec![Complex64::new(0.5, 0.0)]),
            Err(DynamicsError::NotNormalized(_))
        ));
        assert!(matches!(
            Statevector::from_spins(&[1, 2]),
            Err(DynamicsError::BadTerm(_))
        ));
    }

    #[test]
    fn collapse_and_probabilities() {
        let mut s = random_state(3, 1);
        let p = s.probability_down(1).unwrap();
        assert!(p > 0.0 && p < 1.0);
        s.collapse(1, true).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        assert!((s.probability_down(1).unwrap() - 1.0).abs() < 1e-12);
        // The other branch is now empty.
        assert!(matches!(s.collapse(1, false), Err(DynamicsError::ImpossibleCollapse(_))));
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let layout = line(4, None);
        let s = random_state(4, 2);
        let out = evolve_diagonal(&s, &layout, 0.0, &[1.0, 0.5, -0.3, 1.0]).unwrap();
        assert!(out.fidelity(&s) > 1.0 - 1e-14);
    }

    #[test]
    fn two_qubit_phase_gate_matches_dense_oracle() {
        let layout = line(2, None);
        let t = PI / 4.0;
        let u = evolution_operator(&zz_dense(2, 0, 1), t);
        let input = plus_state(2);
        let expected = apply_dense(&u, &input);
        let out = evolve_diagonal(&input, &layout, t, &[1.0, 1.0]).unwrap();
        assert!(out.fidelity(&expected) > 1.0 - 1e-12);
        // The output is entangling: reduced purity of qubit 0 is 1/2.
        let a = out.amplitudes();
        let rho00 = a[0].norm_sqr() + a[2].norm_sqr();
        let coher = a[0].conj() * a[1] + a[2].conj() * a[3];
        let purity = rho00 * rho00 + (1.0 - rho00) * (1.0 - rho00) + 2.0 * coher.norm_sqr();
        assert!((purity - 0.5).abs() < 1e-10);
    }

    #[test]
    fn diagonal_path_equals_dense_exponential() {
        let layout = line(5, None);
        let profile = [1.0, -0.7, 0.4, 0.9, -1.0];
        let t = 0.618;
        let mut h = DMatrix::zeros(32, 32);
        for (a, b, f) in layout.coupled_pairs() {
            h += zz_dense(5, a, b) * Complex64::new(f * profile[a] * profile[b], 0.0);
        }
        let exact = evolution_operator(&h, t);
        let fast = operator_of(5, |basis| {
            evolve_diagonal(basis, &layout, t, &profile).unwrap()
        });
        assert!((exact - fast).norm() < 1e-11);
    }

    #[test]
    fn logical_evolution_matches_physical_embedding() {
        // Three logical qubits of four physical each on a 12-site line; the
        // logical couplings are the profile-weighted interaction sums.
        let layout = line(12, None);
        let sets: Vec<Vec<usize>> = (0..3).map(|i| (4 * i..4 * i + 4).collect()).collect();
        let grouping = Grouping::new(&layout, sets.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let profile: Vec<f64> = (0..12).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        let mut pairs = Vec::new();
        for m in all_interaction_matrices(&layout, &grouping).unwrap() {
            let si = &profile[4 * m.i..4 * m.i + 4];
            let sj = &profile[4 * m.j..4 * m.j + 4];
            pairs.push((m.i, m.j, effective_coupling(si, &m, sj).unwrap()));
        }
        let h = LogicalHamiltonian::from_pairs(3, pairs).unwrap();
        let logical_in = random_state(3, 10);
        let t = 0.77;
        let logical_out = evolve_logical(&logical_in, &h, t).unwrap();

        let embed = |l: &Statevector| {
            let mut amps = vec![Complex64::new(0.0, 0.0); 1 << 12];
            for b in 0..8usize {
                let mut idx = 0usize;
                for (i, set) in sets.iter().enumerate() {
                    if (b >> i) & 1 == 1 {
                        for &q in set {
                            idx |= 1 << q;
                        }
                    }
                }
                amps[idx] = l.amplitudes()[b];
            }
            Statevector::from_amplitudes(amps).unwrap()
        };
        let phys_out = evolve_diagonal(&embed(&logical_in), &layout, t, &profile).unwrap();
        // Intra-set couplings only add one global phase, so fidelity is 1.
        assert!(phys_out.fidelity(&embed(&logical_out)) > 1.0 - 1e-9);
    }

    #[test]
    fn evolve_matches_flip_schedule_expansion() {
        // The diagonal fast path folds each flip schedule into its mean spin
        // profile. Replaying the schedule literally — X pulses at the event
        // times, bare all-on evolution between them — must give the same
        // state.
        let layout = line(5, None);
        let profile = [0.35, -1.0, 0.8, 1.0, -0.45];
        let tau = 0.9;
        let x = Gate1::X.matrix();
        let ones = [1.0; 5];
        let schedule = sequential_schedule(&profile, tau).unwrap();
        let input = random_state(5, 11);

        let fast = evolve_diagonal(&input, &layout, tau, &profile).unwrap();
        let mut literal = input.clone();
        let mut cursor = 0.0;
        for event in schedule.events() {
            if event.fraction > cursor {
                literal =
                    evolve_diagonal(&literal, &layout, (event.fraction - cursor) * tau, &ones)
                        .unwrap();
                cursor = event.fraction;
            }
            for &q in &event.qubits {
                literal.apply_single(q, &x).unwrap();
            }
        }
        if cursor < 1.0 {
            literal = evolve_diagonal(&literal, &layout, (1.0 - cursor) * tau, &ones).unwrap();
        }
        assert!(literal.fidelity(&fast) > 1.0 - 1e-9);
    }

    #[test]
    fn empty_program_is_identity() {
        let layout = line(3, None);
        let program = PulseProgram::new(3, vec![]).unwrap();
        let s = random_state(3, 12);
        let out = apply_program(&s, &layout, &program, 0).unwrap();
        assert!(out.state.fidelity(&s) > 1.0 - 1e-14);
        assert!(out.outcomes.is_empty());
    }

    #[test]
    fn norm_is_preserved_through_programs() {
        let layout = line(4, Some(1.0));
        let grouping = Grouping::new(&layout, vec![(0..4).collect()]).unwrap();
        let tree = CxTree::new(4, 0, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        let program = compile_ghz_prep(&layout, &grouping, 0, &tree).unwrap();
        let run = apply_program(&Statevector::from_bits(4, 0).unwrap(), &layout, &program, 0)
            .unwrap();
        assert!((run.state.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn program_sampling_is_seed_deterministic() {
        let layout = line(2, Some(1.0));
        let program = PulseProgram::new(
            2,
            vec![
                Step::Gate { qubit: 0, gate: Gate1::H },
                Step::MeasureZ { qubit: 0 },
                Step::Gate { qubit: 1, gate: Gate1::H },
                Step::MeasureZ { qubit: 1 },
            ],
        )
        .unwrap();
        let input = Statevector::from_bits(2, 0).unwrap();
        let a = apply_program(&input, &layout, &program, 42).unwrap();
        let b = apply_program(&input, &layout, &program, 42).unwrap();
        assert_eq!(a.outcomes, b.outcomes);
        let mut distinct = false;
        for seed in 0..32 {
            let c = apply_program(&input, &layout, &program, seed).unwrap();
            if c.outcomes != a.outcomes {
                distinct = true;
                break;
            }
        }
        assert!(distinct, "32 seeds never changed the sampled outcomes");
    }

    #[test]
    fn cx_program_truth_table_entry() {
        let layout = line(2, None);
        let grouping = Grouping::new(&layout, vec![vec![0, 1]]).unwrap();
        let program = compile_cx(&layout, &grouping, 0, 1).unwrap();
        let input = Statevector::from_bits(2, 0b01).unwrap();
        let run = apply_program(&input, &layout, &program, 0).unwrap();
        assert!(run.state.amplitude(0b11).norm() > 1.0 - 1e-9);
    }

    #[test]
    fn pauli_dense_basics() {
        let mut h = PauliStringHamiltonian::new(1);
        h.add_term(1.0, &[(0, Pauli::Y)]).unwrap();
        let m = h.to_dense().unwrap();
        assert!((m[(1, 0)] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((m[(0, 1)] - Complex64::new(0.0, -1.0)).norm() < 1e-15);

        let mut h2 = PauliStringHamiltonian::new(2);
        h2.add_term(0.5, &[(0, Pauli::X), (1, Pauli::Z)]).unwrap();
        let expected =
            product_operator(2, &[(0, Gate1::X.matrix()), (1, z_matrix())]) * Complex64::new(0.5, 0.0);
        assert!((h2.to_dense().unwrap() - expected).norm() < 1e-15);

        let mut bad = PauliStringHamiltonian::new(2);
        assert!(bad.add_term(1.0, &[(0, Pauli::X), (0, Pauli::Z)]).is_err());
        assert!(bad.add_term(1.0, &[(5, Pauli::X)]).is_err());
        assert!(PauliStringHamiltonian::new(11).to_dense().is_err());
    }

    fn heisenberg_pair(h: &mut PauliStringHamiltonian, a: usize, b: usize, c: [f64; 3]) {
        h.add_term(c[0], &[(a, Pauli::X), (b, Pauli::X)]).unwrap();
        h.add_term(c[1], &[(a, Pauli::Y), (b, Pauli::Y)]).unwrap();
        h.add_term(c[2], &[(a, Pauli::Z), (b, Pauli::Z)]).unwrap();
    }

    #[test]
    fn projection_kills_xx_yy_on_two_qubits() {
        let mut h = PauliStringHamiltonian::new(2);
        heisenberg_pair(&mut h, 0, 1, [0.8, 0.5, 0.3]);
        let p = zz_projection_transform(&h, &SplitStrategy::RecursiveHalving).unwrap();
        assert_eq!(p.conjugation_sets, vec![vec![], vec![0]]);
        assert!((p.weight - 0.5).abs() < 1e-15);
        assert_eq!(p.hamiltonian.terms().len(), 1);
        let term = &p.hamiltonian.terms()[0];
        assert!((term.coefficient - 0.3).abs() < 1e-15);
        assert!(term.factors.iter().all(|(_, pauli)| *pauli == Pauli::Z));
    }

    #[test]
    fn projection_checkerboard_single_step() {
        // 2×2 grid with nearest-neighbor XYZ couplings; one bipartite flip
        // class suffices and the surviving ZZ couplings keep their inputs.
        let mut h = PauliStringHamiltonian::new(4);
        let pairs = [(0usize, 1usize), (0, 2), (1, 3), (2, 3)];
        for (k, &(a, b)) in pairs.iter().enumerate() {
            heisenberg_pair(&mut h, a, b, [0.7, 0.4, 0.1 + k as f64 * 0.1]);
        }
        let p = zz_projection_transform(&h, &SplitStrategy::TwoColoring(vec![0, 3])).unwrap();
        assert_eq!(p.conjugation_sets.len(), 2);
        assert_eq!(p.hamiltonian.terms().len(), 4);
        for (k, term) in p.hamiltonian.terms().iter().enumerate() {
            assert!((term.coefficient - (0.1 + k as f64 * 0.1)).abs() < 1e-15);
            assert!(term.factors.iter().all(|(_, pauli)| *pauli == Pauli::Z));
        }
    }

    #[test]
    fn projection_keeps_local_z_with_four_element_group() {
        let mut h = PauliStringHamiltonian::new(2);
        heisenberg_pair(&mut h, 0, 1, [0.8, 0.5, 0.3]);
        h.add_term(0.25, &[(0, Pauli::X)]).unwrap();
        h.add_term(0.15, &[(1, Pauli::Y)]).unwrap();
        h.add_term(0.45, &[(0, Pauli::Z)]).unwrap();
        h.add_term(0.35, &[(0, Pauli::X), (1, Pauli::Z)]).unwrap();
        let p = zz_projection_transform(&h, &SplitStrategy::RecursiveHalving).unwrap();
        // Odd X/Y weight present, so the all-qubit flip joins the halving
        // generator: {∅, {0}, {1}, {0,1}}.
        assert_eq!(p.conjugation_sets, vec![vec![], vec![0], vec![1], vec![0, 1]]);
        assert!((p.weight - 0.25).abs() < 1e-15);
        let survivors: Vec<(f64, usize)> = p
            .hamiltonian
            .terms()
            .iter()
            .map(|t| (t.coefficient, t.factors.len()))
            .collect();
        assert_eq!(survivors, vec![(0.3, 2), (0.45, 1)]);
    }

    #[test]
    fn projection_matches_dense_group_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = PauliStringHamiltonian::new(3);
        let paulis = [Pauli::X, Pauli::Y, Pauli::Z];
        for a in 0..3usize {
            for b in (a + 1)..3 {
                for &pa in &paulis {
                    for &pb in &paulis {
                        h.add_term(rng.gen::<f64>() - 0.5, &[(a, pa), (b, pb)]).unwrap();
                    }
                }
            }
            for &pa in &paulis {
                h.add_term(rng.gen::<f64>() - 0.5, &[(a, pa)]).unwrap();
            }
        }
        let p = zz_projection_transform(&h, &SplitStrategy::RecursiveHalving).unwrap();
        let dense = h.to_dense().unwrap();
        let dim = 8;
        let mut average = DMatrix::zeros(dim, dim);
        for set in &p.conjugation_sets {
            let mask: usize = set.iter().map(|&q| 1usize << q).sum();
            let v = DMatrix::from_fn(dim, dim, |r, c| {
                if r == c {
                    Complex64::new(1.0 - 2.0 * ((r & mask).count_ones() & 1) as f64, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            average += &v * &dense * &v;
        }
        average *= Complex64::new(p.weight, 0.0);
        let projected = p.hamiltonian.to_dense().unwrap();
        assert!((projected.clone() - average).norm() < 1e-12);
        // Certificate: the survivor commutes with every single-qubit Z.
        for q in 0..3 {
            let zq = product_operator(3, &[(q, z_matrix())]);
            assert!((&projected * &zq - &zq * &projected).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_average_evolution_converges_with_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut h = PauliStringHamiltonian::new(3);
        for a in 0..3usize {
            for b in (a + 1)..3 {
                heisenberg_pair(&mut h, a, b, [rng.gen(), rng.gen(), rng.gen()]);
            }
        }
        let p = zz_projection_transform(&h, &SplitStrategy::RecursiveHalving).unwrap();
        let dense = h.to_dense().unwrap();
        let total_time = 1.0;
        let target = evolution_operator(&p.hamiltonian.to_dense().unwrap(), total_time);
        let dim = 8;
        let error_at = |k: usize| {
            let slice = evolution_operator(&dense, total_time / k as f64);
            let mut avg = DMatrix::zeros(dim, dim);
            for set in &p.conjugation_sets {
                let mask: usize = set.iter().map(|&q| 1usize << q).sum();
                let v = DMatrix::from_fn(dim, dim, |r, c| {
                    if r == c {
                        Complex64::new(1.0 - 2.0 * ((r & mask).count_ones() & 1) as f64, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                avg += &v * &slice * &v;
            }
            avg *= Complex64::new(p.weight, 0.0);
            let mut acc = DMatrix::identity(dim, dim);
            for _ in 0..k {
                acc = &avg * &acc;
            }
            phase_aligned_distance(&acc, &target)
        };
        let errs: Vec<f64> = [4usize, 16, 64].iter().map(|&k| error_at(k)).collect();
        assert!(errs[1] < errs[0]);
        assert!(errs[2] < errs[1]);
    }

    #[test]
    fn trotter_commuting_terms_are_exact() {
        let terms = vec![
            TrotterTerm::ZzPairs(vec![(0, 1, 0.8)]),
            TrotterTerm::ZzPairs(vec![(1, 2, 0.5)]),
            TrotterTerm::FieldZ(vec![0.3, 0.0, -0.2]),
        ];
        let mut h = DMatrix::zeros(8, 8);
        h += zz_dense(3, 0, 1) * Complex64::new(0.8, 0.0);
        h += zz_dense(3, 1, 2) * Complex64::new(0.5, 0.0);
        h += product_operator(3, &[(0, z_matrix())]) * Complex64::new(0.3, 0.0);
        h += product_operator(3, &[(2, z_matrix())]) * Complex64::new(-0.2, 0.0);
        let exact = evolution_operator(&h, 1.3);
        let trotter = operator_of(3, |basis| trotter_evolve(basis, &terms, 1.3, 2).unwrap());
        assert!((exact - trotter).norm() < 1e-10);
    }

    #[test]
    fn trotter_first_order_scaling() {
        // ZZ couplings plus a transverse field: the canonical non-commuting
        // pair. First-order error should fall off like 1/k.
        let terms = vec![
            TrotterTerm::ZzPairs(vec![(0, 1, 0.8), (1, 2, 0.5), (0, 2, 0.3)]),
            TrotterTerm::FieldX(vec![1.0, 1.0, 1.0]),
        ];
        let mut h = DMatrix::zeros(8, 8);
        for &(a, b, w) in &[(0usize, 1usize, 0.8), (1, 2, 0.5), (0, 2, 0.3)] {
            h += zz_dense(3, a, b) * Complex64::new(w, 0.0);
        }
        for q in 0..3 {
            h += product_operator(3, &[(q, Gate1::X.matrix())]);
        }
        let exact = evolution_operator(&h, 1.0);
        let error_at = |k: usize| {
            let u = operator_of(3, |basis| trotter_evolve(basis, &terms, 1.0, k).unwrap());
            (u - exact.clone()).norm()
        };
        let ks = [8usize, 16, 32, 64];
        let errs: Vec<f64> = ks.iter().map(|&k| error_at(k)).collect();
        let ratio = errs[2] / errs[1];
        assert!(
            (0.4..=0.6).contains(&ratio),
            "error(k=32)/error(k=16) = {ratio}"
        );
        // Least-squares slope of ln(err) against ln(k).
        let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|&e| e.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 4.0;
        let ym = ys.iter().sum::<f64>() / 4.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        assert!(
            (-1.2..=-0.8).contains(&slope),
            "first-order slope out of range: {slope}"
        );
    }

    #[test]
    fn trotter_reproduces_heisenberg_evolution() {
        let pairs = [(0usize, 1usize), (1, 2)];
        let alphas = [0.6, 0.45];
        let betas = [0.35, 0.5];
        let lambdas = [0.25, 0.4];
        let terms = vec![
            TrotterTerm::XxPairs(
                pairs.iter().zip(&alphas).map(|(&(a, b), &w)| (a, b, w)).collect(),
            ),
            TrotterTerm::YyPairs(
                pairs.iter().zip(&betas).map(|(&(a, b), &w)| (a, b, w)).collect(),
            ),
            TrotterTerm::ZzPairs(
                pairs.iter().zip(&lambdas).map(|(&(a, b), &w)| (a, b, w)).collect(),
            ),
        ];
        let mut h = PauliStringHamiltonian::new(3);
        for (k, &(a, b)) in pairs.iter().enumerate() {
            heisenberg_pair(&mut h, a, b, [alphas[k], betas[k], lambdas[k]]);
        }
        let exact = evolution_operator(&h.to_dense().unwrap(), 1.0);
        let error_at = |k: usize| {
            let u = operator_of(3, |basis| trotter_evolve(basis, &terms, 1.0, k).unwrap());
            (u - exact.clone()).norm()
        };
        let coarse = error_at(8);
        let fine = error_at(64);
        assert!(fine < 0.2 * coarse, "no convergence: {coarse} -> {fine}");
        assert!(fine < 0.02);
    }

    #[test]
    fn many_body_two_qubit_axis_and_oracle() {
        let omega = 0.37;
        let built = many_body_z_exact(2, &[0, 1], omega, 0.8).unwrap();
        assert!(matches!(built.pivot_axis, PivotAxis::PlusY | PivotAxis::MinusY));
        let raw = logical_circuit_unitary(&built.raw_circuit).unwrap();
        let a = built.pivot_axis.matrix();
        let target_raw =
            evolution_operator(&product_operator(2, &[(0, a), (1, z_matrix())]), omega);
        assert!((raw - target_raw).norm() < 1e-9);
        let full = logical_circuit_unitary(&built.circuit).unwrap();
        let target = evolution_operator(&zz_dense(2, 0, 1), omega);
        assert!((full - target).norm() < 1e-9);
    }

    #[test]
    fn many_body_zero_angle_is_identity() {
        let built = many_body_z_exact(3, &[0, 1, 2], 0.0, 1.0).unwrap();
        let u = logical_circuit_unitary(&built.circuit).unwrap();
        assert!((u - DMatrix::<Complex64>::identity(8, 8)).norm() < 1e-12);
    }

    #[test]
    fn many_body_axis_repeats_with_period_four() {
        let at = |n: usize| {
            let targets: Vec<usize> = (0..n).collect();
            many_body_z_exact(n, &targets, 0.2, 1.0).unwrap().pivot_axis
        };
        assert_eq!(at(6), at(2));
        assert_eq!(at(5), at(9));
    }

    #[test]
    fn many_body_three_qubit_identity() {
        // Dense version of the conjugation identity behind the whole scheme:
        // e^{−iλ Z₁Z₂Z₃} = e^{−iπX₁Z₂/4} · e^{−iλY₁Z₃} · e^{iπX₁Z₂/4}.
        let lambda = 0.41;
        let xz = product_operator(3, &[(0, Gate1::X.matrix()), (1, z_matrix())]);
        let y = PivotAxis::PlusY.matrix();
        let yz = product_operator(3, &[(0, y), (2, z_matrix())]);
        let zzz = product_operator(3, &[(0, z_matrix()), (1, z_matrix()), (2, z_matrix())]);
        let lhs = evolution_operator(&zzz, lambda);
        let rhs = evolution_operator(&xz, PI / 4.0)
            * evolution_operator(&yz, lambda)
            * evolution_operator(&xz, -PI / 4.0);
        assert!((lhs - rhs).norm() < 1e-10);

        // And the compiled circuit realizes the same three-body generator.
        let built = many_body_z_exact(3, &[0, 1, 2], lambda, 0.9).unwrap();
        let u = logical_circuit_unitary(&built.circuit).unwrap();
        assert!((u - evolution_operator(&zzz, lambda)).norm() < 1e-9);
    }

    #[test]
    fn many_body_rejects_bad_targets() {
        assert!(matches!(
            many_body_z_exact(3, &[0], 0.1, 1.0),
            Err(DynamicsError::BadTargets)
        ));
        assert!(matches!(
            many_body_z_exact(3, &[0, 0], 0.1, 1.0),
            Err(DynamicsError::BadTargets)
        ));
        assert!(matches!(
            many_body_z_exact(3, &[0, 5], 0.1, 1.0),
            Err(DynamicsError::BadTargets)
        ));
        assert!(many_body_z_exact(3, &[0, 1], 0.1, -1.0).is_err());
    }

    #[test]
    fn commutator_circuit_second_order_accuracy() {
        let lambda = 1.0;
        let mu = 1.0;
        let zzz = product_operator(3, &[(0, z_matrix()), (1, z_matrix()), (2, z_matrix())]);
        let error_at = |t: f64| {
            let circuit = many_body_z_commutator(lambda, mu, t).unwrap();
            let u = logical_circuit_unitary(&circuit).unwrap();
            let target = evolution_operator(&zzz, 2.0 * lambda * mu * t * t);
            (u - target).norm()
        };
        let t = 0.05;
        assert!(error_at(t) < 10.0 * t * t * t, "error {} at t={t}", error_at(t));
        let ratio = error_at(t / 2.0) / error_at(t);
        assert!(ratio <= 0.2, "halving t only scaled the error by {ratio}");
        // Tiny times approach the identity.
        let small = many_body_z_commutator(lambda, mu, 1e-4).unwrap();
        let u = logical_circuit_unitary(&small).unwrap();
        assert!((u - DMatrix::<Complex64>::identity(8, 8)).norm() < 1e-6);
    }

    #[test]
    fn circuit_unitary_refuses_measurements() {
        let circuit = LogicalCircuit::new(
            1,
            vec![LogicalOp::Measure { qubit: 0, basis: Mat2::identity() }],
        )
        .unwrap();
        assert!(matches!(
            logical_circuit_unitary(&circuit),
            Err(DynamicsError::UnexpectedMeasurement)
        ));
    }

    #[test]
    fn logical_circuit_ops_act_correctly() {
        // PrepGhz + CX chain = two-logical-qubit GHZ.
        let circuit = LogicalCircuit::new(
            2,
            vec![LogicalOp::PrepGhz { qubit: 0 }, LogicalOp::Cx { control: 0, target: 1 }],
        )
        .unwrap();
        let run = simulate_logical_circuit(&Statevector::from_bits(2, 0).unwrap(), &circuit, 0)
            .unwrap();
        let expected = state_from(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]);
        assert!(run.state.fidelity(&expected) > 1.0 - 1e-12);

        // A logical measurement in the Hadamard basis of |0⟩ is a fair coin.
        let meas = LogicalCircuit::new(
            1,
            vec![LogicalOp::Measure { qubit: 0, basis: Gate1::H.matrix() }],
        )
        .unwrap();
        let input = Statevector::from_bits(1, 0).unwrap();
        let mut ups = 0;
        for seed in 0..2000 {
            let run = simulate_logical_circuit(&input, &meas, seed).unwrap();
            if run.outcomes[0] == 1 {
                ups += 1;
            }
        }
        let freq = ups as f64 / 2000.0;
        assert!((freq - 0.5).abs() < 5.0 * (0.25f64 / 2000.0).sqrt());
    }
}
