//! Lowering logical-qubit operations to physical pulse programs.
//!
//! A *pulse program* is the native control language assumed by the hardware
//! model: intervals of free ZZ evolution with a per-qubit effective-spin
//! profile (realized by flip schedules), interleaved with zero-time
//! single-qubit gates and single-qubit Z measurements. Everything a logical
//! qubit can do — GHZ-style preparation, arbitrary single-logical-qubit
//! unitaries, inter-set decoupling, slot redistribution, and deterministic
//! two-state discrimination — compiles down to that language here.
//!
//! The workhorse is the *CX window*: one evolution interval of duration
//! `π/(4f)` with only the gate's qubits at effective spin ±1 and every other
//! qubit held at 0, bracketed by Hadamards on the target and trailed by
//! `−π/2` Z rotations on both qubits. Several controlled-X gates share a
//! window when their couplings are equal and the coupling graph restricted to
//! the window's active qubits contains exactly the wanted gate edges.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::Matrix2;
use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{classify_set, Grouping, LatticeError, PhysicalLayout};

/// 2×2 complex matrix used for single-qubit gates and logical bases.
pub type Mat2 = Matrix2<Complex64>;

/// Tolerance for unitarity / orthonormality checks on user-supplied matrices.
const MATRIX_TOLERANCE: f64 = 1e-9;

/// Two couplings count as "equal strength" (and may share an evolution
/// window) when they differ by less than this relative amount.
const COUPLING_MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("qubits {0} and {1} have zero coupling; a CX between them needs SWAP routing first (see delocalize_grouping)")]
    UncoupledPair(usize, usize),
    #[error("set {0} is not connected by nonzero couplings; delocalize_grouping can bring its qubits together first")]
    DisconnectedSet(usize),
    #[error("set index {0} does not exist in the grouping")]
    UnknownSet(usize),
    #[error("invalid CX tree: {0}")]
    BadTree(String),
    #[error("grouping mismatch: {0}")]
    GroupingShape(String),
    #[error("no coupling path between qubits {0} and {1}; routing is impossible on this layout")]
    RoutingDisconnected(usize, usize),
    #[error("measurement basis columns are not orthonormal")]
    NonOrthogonalBasis,
    #[error("matrix is not unitary")]
    NotUnitary,
    #[error("malformed program: {0}")]
    MalformedProgram(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// A zero-time single-qubit gate.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate1 {
    X,
    H,
    /// Z rotation `exp(−i φ Z / 2)`.
    Zrot(f64),
    Unitary(Mat2),
}

impl Gate1 {
    pub fn matrix(&self) -> Mat2 {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        match self {
            Gate1::X => Mat2::new(o, l, l, o),
            Gate1::H => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                Mat2::new(h, h, h, -h)
            }
            Gate1::Zrot(phi) => {
                let e = Complex64::from_polar(1.0, -phi / 2.0);
                Mat2::new(e, o, o, e.conj())
            }
            Gate1::Unitary(m) => *m,
        }
    }
}

/// One step of a pulse program.
#[derive(Debug, Clone)]
pub enum Step {
    /// Free ZZ evolution for `duration`, with qubit `q` held at effective
    /// spin `profile[q] ∈ [−1, 1]` by its flip schedule.
    Evolve { duration: f64, profile: Vec<f64> },
    Gate { qubit: usize, gate: Gate1 },
    /// Projective Z measurement; the ±1 outcome is recorded in order of
    /// execution and can be referenced by later `Conditional` steps.
    MeasureZ { qubit: usize },
    /// Branch on a previously recorded measurement outcome. Branches may
    /// contain gates only, so they consume zero time.
    Conditional { measurement: usize, when_down: Vec<Step>, when_up: Vec<Step> },
}

/// A validated sequence of steps over a fixed number of physical qubits.
#[derive(Debug, Clone)]
pub struct PulseProgram {
    num_qubits: usize,
    steps: Vec<Step>,
}

impl PulseProgram {
    pub fn new(num_qubits: usize, steps: Vec<Step>) -> Result<Self, CompileError> {
        let mut measured = 0usize;
        validate_steps(&steps, num_qubits, &mut measured, false)?;
        Ok(Self { num_qubits, steps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Total evolution time. Gates, measurements, and conditional branches
    /// are zero-time, so this is the sum of `Evolve` durations.
    pub fn total_time(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| match s {
                Step::Evolve { duration, .. } => *duration,
                _ => 0.0,
            })
            .sum()
    }

    pub fn num_evolve_steps(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Evolve { .. })).count()
    }

    /// Human-readable step table; durations are in the same units the layout
    /// uses for `δ/J`.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# qubits = {}", self.num_qubits);
        let _ = writeln!(out, "# total evolution time = {:.9}", self.total_time());
        let mut measured = 0usize;
        for (i, step) in self.steps.iter().enumerate() {
            let _ = write!(out, "{i:4}  ");
            format_step(&mut out, step, &mut measured);
            out.push('\n');
        }
        out
    }
}

fn format_step(out: &mut String, step: &Step, measured: &mut usize) {
    match step {
        Step::Evolve { duration, profile } => {
            let _ = write!(out, "evolve   {duration:.9}  [");
            for (k, v) in profile.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:+.2}");
            }
            out.push(']');
        }
        Step::Gate { qubit, gate } => {
            let name = match gate {
                Gate1::X => "X".to_string(),
                Gate1::H => "H".to_string(),
                Gate1::Zrot(phi) => format!("Zrot({phi:.9})"),
                Gate1::Unitary(_) => "U2".to_string(),
            };
            let _ = write!(out, "gate     q{qubit} {name}");
        }
        Step::MeasureZ { qubit } => {
            let _ = write!(out, "measure  q{qubit} -> m{measured}");
            *measured += 1;
        }
        Step::Conditional { measurement, when_down, when_up } => {
            let _ = write!(out, "cond     m{measurement}==down {{");
            for s in when_down {
                out.push(' ');
                format_step(out, s, measured);
                out.push(';');
            }
            let _ = write!(out, " }} up {{");
            for s in when_up {
                out.push(' ');
                format_step(out, s, measured);
                out.push(';');
            }
            let _ = write!(out, " }}");
        }
    }
}

fn validate_steps(
    steps: &[Step],
    num_qubits: usize,
    measured: &mut usize,
    in_branch: bool,
) -> Result<(), CompileError> {
    for step in steps {
        match step {
            Step::Evolve { duration, profile } => {
                if in_branch {
                    return Err(CompileError::MalformedProgram(
                        "evolution inside a conditional branch".into(),
                    ));
                }
                if !duration.is_finite() || *duration <= 0.0 {
                    return Err(CompileError::MalformedProgram(format!(
                        "evolution duration must be positive, got {duration}"
                    )));
                }
                if profile.len() != num_qubits {
                    return Err(CompileError::MalformedProgram(format!(
                        "profile has {} entries for {num_qubits} qubits",
                        profile.len()
                    )));
                }
                for (q, &v) in profile.iter().enumerate() {
                    if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                        return Err(CompileError::MalformedProgram(format!(
                            "profile value {v} for qubit {q} is outside [-1, 1]"
                        )));
                    }
                }
            }
            Step::Gate { qubit, gate } => {
                if *qubit >= num_qubits {
                    return Err(CompileError::MalformedProgram(format!(
                        "gate on qubit {qubit} of {num_qubits}"
                    )));
                }
                match gate {
                    Gate1::Zrot(phi) if !phi.is_finite() => {
                        return Err(CompileError::MalformedProgram(
                            "non-finite rotation angle".into(),
                        ));
                    }
                    Gate1::Unitary(m) if !is_unitary(m) => return Err(CompileError::NotUnitary),
                    _ => {}
                }
            }
            Step::MeasureZ { qubit } => {
                if in_branch {
                    return Err(CompileError::MalformedProgram(
                        "measurement inside a conditional branch".into(),
                    ));
                }
                if *qubit >= num_qubits {
                    return Err(CompileError::MalformedProgram(format!(
                        "measurement on qubit {qubit} of {num_qubits}"
                    )));
                }
                *measured += 1;
            }
            Step::Conditional { measurement, when_down, when_up } => {
                if in_branch {
                    return Err(CompileError::MalformedProgram(
                        "nested conditional branches".into(),
                    ));
                }
                if *measurement >= *measured {
                    return Err(CompileError::MalformedProgram(format!(
                        "conditional references outcome m{measurement} before it is measured"
                    )));
                }
                validate_steps(when_down, num_qubits, measured, true)?;
                validate_steps(when_up, num_qubits, measured, true)?;
            }
        }
    }
    Ok(())
}

pub fn is_unitary(m: &Mat2) -> bool {
    (m.adjoint() * m - Mat2::identity()).norm() < MATRIX_TOLERANCE
}

/// One operation on a register of logical qubits.
#[derive(Debug, Clone)]
pub enum LogicalOp {
    /// Put logical qubit `qubit` (assumed in its reference state) into the
    /// even superposition of its two basis states.
    PrepGhz { qubit: usize },
    Unitary { qubit: usize, matrix: Mat2 },
    /// `exp(−i φ Z / 2)` on a logical qubit.
    Zrot { qubit: usize, phi: f64 },
    X { qubit: usize },
    Cx { control: usize, target: usize },
    /// Pairwise logical ZZ evolution `exp(−i t Σ λ_ij Z_i Z_j)` with the
    /// given coupling list.
    Evolve { couplings: Vec<(usize, usize, f64)>, duration: f64 },
    /// Projective measurement in the basis given by the matrix columns.
    Measure { qubit: usize, basis: Mat2 },
}

/// A validated sequence of logical operations.
#[derive(Debug, Clone)]
pub struct LogicalCircuit {
    num_qubits: usize,
    ops: Vec<LogicalOp>,
}

impl LogicalCircuit {
    pub fn new(num_qubits: usize, ops: Vec<LogicalOp>) -> Result<Self, CompileError> {
        let mut circuit = Self { num_qubits, ops: Vec::with_capacity(ops.len()) };
        for op in ops {
            circuit.push(op)?;
        }
        Ok(circuit)
    }

    pub fn push(&mut self, op: LogicalOp) -> Result<(), CompileError> {
        let n = self.num_qubits;
        let check = |q: usize| {
            if q >= n {
                Err(CompileError::MalformedProgram(format!("logical index {q} of {n}")))
            } else {
                Ok(())
            }
        };
        match &op {
            LogicalOp::PrepGhz { qubit } | LogicalOp::X { qubit } => check(*qubit)?,
            LogicalOp::Zrot { qubit, phi } => {
                check(*qubit)?;
                if !phi.is_finite() {
                    return Err(CompileError::MalformedProgram(
                        "non-finite rotation angle".into(),
                    ));
                }
            }
            LogicalOp::Unitary { qubit, matrix } => {
                check(*qubit)?;
                if !is_unitary(matrix) {
                    return Err(CompileError::NotUnitary);
                }
            }
            LogicalOp::Cx { control, target } => {
                check(*control)?;
                check(*target)?;
                if control == target {
                    return Err(CompileError::MalformedProgram(
                        "CX control equals target".into(),
                    ));
                }
            }
            LogicalOp::Evolve { couplings, duration } => {
                if !duration.is_finite() || *duration <= 0.0 {
                    return Err(CompileError::MalformedProgram(format!(
                        "evolution duration must be positive, got {duration}"
                    )));
                }
                for &(i, j, w) in couplings {
                    check(i)?;
                    check(j)?;
                    if i == j || !w.is_finite() {
                        return Err(CompileError::MalformedProgram(format!(
                            "bad coupling entry ({i}, {j}, {w})"
                        )));
                    }
                }
            }
            LogicalOp::Measure { qubit, basis } => {
                check(*qubit)?;
                if !is_unitary(basis) {
                    return Err(CompileError::NonOrthogonalBasis);
                }
            }
        }
        self.ops.push(op);
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn ops(&self) -> &[LogicalOp] {
        &self.ops
    }
}

/// A rooted spanning arborescence over a set's slots, listing CX gates
/// `(control, target)` in an order where every control has already been
/// reached from the root.
#[derive(Debug, Clone)]
pub struct CxTree {
    num_qubits: usize,
    root: usize,
    gates: Vec<(usize, usize)>,
}

impl CxTree {
    pub fn new(
        num_qubits: usize,
        root: usize,
        gates: Vec<(usize, usize)>,
    ) -> Result<Self, CompileError> {
        if root >= num_qubits {
            return Err(CompileError::BadTree(format!("root {root} of {num_qubits} slots")));
        }
        if gates.len() + 1 != num_qubits {
            return Err(CompileError::BadTree(format!(
                "{} gates cannot span {num_qubits} slots",
                gates.len()
            )));
        }
        let mut reached = vec![false; num_qubits];
        reached[root] = true;
        for &(c, t) in &gates {
            if c >= num_qubits || t >= num_qubits || c == t {
                return Err(CompileError::BadTree(format!("bad gate pair ({c}, {t})")));
            }
            if !reached[c] {
                return Err(CompileError::BadTree(format!(
                    "control {c} is used before being reached"
                )));
            }
            if reached[t] {
                return Err(CompileError::BadTree(format!("slot {t} is targeted twice")));
            }
            reached[t] = true;
        }
        Ok(Self { num_qubits, root, gates })
    }

    /// Breadth-first spanning tree of set `i`'s internal coupling graph,
    /// rooted at slot `root`.
    pub fn bfs(
        layout: &PhysicalLayout,
        grouping: &Grouping,
        i: usize,
        root: usize,
    ) -> Result<Self, CompileError> {
        if i >= grouping.num_sets() {
            return Err(CompileError::UnknownSet(i));
        }
        let (_, adj) = classify_set(layout, grouping, i)?;
        let m = adj.len();
        if root >= m {
            return Err(CompileError::BadTree(format!("root {root} of {m} slots")));
        }
        let mut gates = Vec::with_capacity(m.saturating_sub(1));
        let mut seen = vec![false; m];
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(c) = queue.pop_front() {
            for &t in &adj[c] {
                if !seen[t] {
                    seen[t] = true;
                    gates.push((c, t));
                    queue.push_back(t);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(CompileError::DisconnectedSet(i));
        }
        Self::new(m, root, gates)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn gates(&self) -> &[(usize, usize)] {
        &self.gates
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }
}

/// Greedily pack tree gates (physical indices) into evolution windows.
///
/// A window accepts a gate when (a) its control was reached in an *earlier*
/// window, (b) its coupling matches the window's, and (c) adding its qubits
/// keeps the window's active-coupling graph equal to exactly the window's
/// gate edges — the condition under which simultaneous execution is an exact
/// product of the individual CX gates. Gates that do not fit wait for the
/// next window; a singleton window is always valid, so this terminates.
fn layer_tree_windows(
    layout: &PhysicalLayout,
    root: usize,
    gates: &[(usize, usize)],
) -> Result<Vec<(f64, Vec<(usize, usize)>)>, CompileError> {
    let mut reached = vec![false; layout.len()];
    reached[root] = true;
    let mut remaining: Vec<(usize, usize)> = gates.to_vec();
    let mut windows = Vec::new();
    while !remaining.is_empty() {
        let mut window: Vec<(usize, usize)> = Vec::new();
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        let mut active: Vec<usize> = Vec::new();
        let mut f_window = 0.0;
        let mut deferred = Vec::new();
        for (c, t) in remaining {
            if !reached[c] {
                deferred.push((c, t));
                continue;
            }
            let f = layout.coupling_strength(c, t)?;
            if f == 0.0 {
                return Err(CompileError::UncoupledPair(c, t));
            }
            if !window.is_empty()
                && (f - f_window).abs() > COUPLING_MATCH_TOLERANCE * f.max(f_window)
            {
                deferred.push((c, t));
                continue;
            }
            let mut candidate_edges = edges.clone();
            candidate_edges.insert((c.min(t), c.max(t)));
            let new_qubits: Vec<usize> =
                [c, t].into_iter().filter(|q| !active.contains(q)).collect();
            let clash = new_qubits.iter().any(|&q| {
                active.iter().chain(new_qubits.iter()).any(|&a| {
                    a != q
                        && layout.coupling_strength(q, a).unwrap_or(0.0) != 0.0
                        && !candidate_edges.contains(&(q.min(a), q.max(a)))
                })
            });
            if clash {
                deferred.push((c, t));
                continue;
            }
            f_window = f;
            edges = candidate_edges;
            active.extend(new_qubits);
            window.push((c, t));
        }
        if window.is_empty() {
            return Err(CompileError::BadTree(
                "no gate has a reached control; the gate list is not in tree order".into(),
            ));
        }
        for &(_, t) in &window {
            reached[t] = true;
        }
        windows.push((f_window, window));
        remaining = deferred;
    }
    Ok(windows)
}

/// Steps for one CX window: Hadamards on the targets, one evolution interval
/// of `π/(4f)` with only the window's qubits active, then `−π/2` Z rotations
/// on each gate's qubits and closing Hadamards. The product equals the
/// window's CX gates up to a global phase.
fn window_steps(num_qubits: usize, f: f64, gates: &[(usize, usize)]) -> Vec<Step> {
    let mut steps = Vec::with_capacity(4 * gates.len() + 1);
    for &(_, t) in gates {
        steps.push(Step::Gate { qubit: t, gate: Gate1::H });
    }
    let mut profile = vec![0.0; num_qubits];
    for &(c, t) in gates {
        profile[c] = 1.0;
        profile[t] = 1.0;
    }
    steps.push(Step::Evolve { duration: PI / (4.0 * f), profile });
    for &(c, t) in gates {
        steps.push(Step::Gate { qubit: c, gate: Gate1::Zrot(-FRAC_PI_2) });
        steps.push(Step::Gate { qubit: t, gate: Gate1::Zrot(-FRAC_PI_2) });
    }
    for &(_, t) in gates {
        steps.push(Step::Gate { qubit: t, gate: Gate1::H });
    }
    steps
}

fn check_grouping(layout: &PhysicalLayout, grouping: &Grouping) -> Result<(), CompileError> {
    if grouping.num_qubits() != layout.len() {
        return Err(CompileError::GroupingShape(format!(
            "grouping covers {} qubits but the layout has {}",
            grouping.num_qubits(),
            layout.len()
        )));
    }
    Ok(())
}

/// Compile a controlled-X between two coupled physical qubits. All other
/// qubits sit at effective spin 0 during the window, so they pick up no
/// entangling phase.
pub fn compile_cx(
    layout: &PhysicalLayout,
    grouping: &Grouping,
    control: usize,
    target: usize,
) -> Result<PulseProgram, CompileError> {
    check_grouping(layout, grouping)?;
    let f = layout.coupling_strength(control, target)?;
    if f == 0.0 {
        return Err(CompileError::UncoupledPair(control, target));
    }
    PulseProgram::new(layout.len(), window_steps(layout.len(), f, &[(control, target)]))
}

/// Compile the preparation of logical qubit `i`'s even superposition: one
/// Hadamard on the tree root followed by the tree's CX gates, packed into as
/// few equal-coupling windows as the tree order allows. Applied to the
/// all-spins-up reference state this yields `(|0L⟩ + |1L⟩)/√2` exactly.
pub fn compile_ghz_prep(
    layout: &PhysicalLayout,
    grouping: &Grouping,
    i: usize,
    tree: &CxTree,
) -> Result<PulseProgram, CompileError> {
    check_grouping(layout, grouping)?;
    if i >= grouping.num_sets() {
        return Err(CompileError::UnknownSet(i));
    }
    let set = grouping.set(i);
    if tree.num_qubits() != set.len() {
        return Err(CompileError::BadTree(format!(
            "tree spans {} slots but set {i} has {}",
            tree.num_qubits(),
            set.len()
        )));
    }
    let mut steps = vec![Step::Gate { qubit: set[tree.root()], gate: Gate1::H }];
    if set.len() > 1 {
        let phys: Vec<(usize, usize)> =
            tree.gates().iter().map(|&(c, t)| (set[c], set[t])).collect();
        for (f, gates) in layer_tree_windows(layout, set[tree.root()], &phys)? {
            steps.extend(window_steps(layout.len(), f, &gates));
        }
    }
    PulseProgram::new(layout.len(), steps)
}

/// Grow a copy tree and its window layering together from one root: each
/// window greedily absorbs reached→unreached coupled edges that share the
/// window's coupling strength and don't clash with what the window already
/// holds. Choosing edges freely (rather than layering a fixed tree) lets a
/// window route around occupied neighbors.
fn grow_windows(
    layout: &PhysicalLayout,
    set: &[usize],
    root_slot: usize,
    set_index: usize,
) -> Result<Vec<(f64, Vec<(usize, usize)>)>, CompileError> {
    let mut reached: HashSet<usize> = HashSet::from([set[root_slot]]);
    let mut windows = Vec::new();
    while reached.len() < set.len() {
        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        for &u in set {
            if !reached.contains(&u) {
                continue;
            }
            for &v in set {
                if reached.contains(&v) {
                    continue;
                }
                let f = layout.coupling_strength(u, v)?;
                if f != 0.0 {
                    candidates.push((u, v, f));
                }
            }
        }
        if candidates.is_empty() {
            return Err(CompileError::DisconnectedSet(set_index));
        }
        candidates.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut gates: Vec<(usize, usize)> = Vec::new();
        let mut active: Vec<usize> = Vec::new();
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        let mut claimed: HashSet<usize> = HashSet::new();
        let mut window_f: Option<f64> = None;
        for (u, v, f) in candidates {
            if claimed.contains(&v) {
                continue;
            }
            if let Some(wf) = window_f {
                if (f - wf).abs() > COUPLING_MATCH_TOLERANCE * wf.abs() {
                    continue;
                }
            }
            let mut tentative = active.clone();
            if !tentative.contains(&u) {
                tentative.push(u);
            }
            tentative.push(v);
            let key = (u.min(v), u.max(v));
            edges.insert(key);
            let clash = tentative.iter().enumerate().any(|(k, &a)| {
                tentative[..k].iter().any(|&b| {
                    !edges.contains(&(a.min(b), a.max(b)))
                        && layout.coupling_strength(a, b).unwrap_or(0.0) != 0.0
                })
            });
            if clash {
                edges.remove(&key);
                continue;
            }
            gates.push((u, v));
            active = tentative;
            claimed.insert(v);
            window_f.get_or_insert(f);
        }
        reached.extend(gates.iter().map(|&(_, v)| v));
        windows.push((window_f.expect("first candidate always fits"), gates));
    }
    Ok(windows)
}

/// Pick, among the window layerings grown from each root slot, one with the
/// fewest windows. Ties break toward the lowest root slot.
fn best_tree_windows(
    layout: &PhysicalLayout,
    grouping: &Grouping,
    i: usize,
) -> Result<(usize, Vec<(f64, Vec<(usize, usize)>)>), CompileError> {
    let set = grouping.set(i);
    let mut best: Option<(usize, Vec<(f64, Vec<(usize, usize)>)>)> = None;
    for root in 0..set.len() {
        let windows = grow_windows(layout, set, root, i)?;
        if best.as_ref().is_none_or(|(_, w)| windows.len() < w.len()) {
            best = Some((set[root], windows));
        }
    }
    Ok(best.expect("sets are non-empty"))
}

/// Compile an arbitrary single-logical-qubit unitary on set `i` as
/// decode–apply–encode: un-copy the set onto one root qubit through the
/// reversed CX windows, apply `u` there, and copy back out.
///
/// Two unitaries skip the evolution entirely:
/// - a diagonal `u` becomes a single Z rotation carrying the whole logical
///   angle on the set's first qubit (any split of the angle across qubits
///   that sums to it acts identically on the code space);
/// - an X-type `u` becomes a transversal flip of every qubit in the set.
pub fn compile_logical_unitary(
    layout: &PhysicalLayout,
    grouping: &Grouping,
    i: usize,
    u: &Mat2,
) -> Result<PulseProgram, CompileError> {
    check_grouping(layout, grouping)?;
    if i >= grouping.num_sets() {
        return Err(CompileError::UnknownSet(i));
    }
    if !is_unitary(u) {
        return Err(CompileError::NotUnitary);
    }
    let set = grouping.set(i);

    if u[(0, 1)].norm() < MATRIX_TOLERANCE && u[(1, 0)].norm() < MATRIX_TOLERANCE {
        // Diagonal: pure logical Z rotation.
        let phi = (u[(1, 1)] * u[(0, 0)].conj()).arg();
        return PulseProgram::new(
            layout.len(),
            vec![Step::Gate { qubit: set[0], gate: Gate1::Zrot(phi) }],
        );
    }
    if u[(0, 0)].norm() < MATRIX_TOLERANCE
        && u[(1, 1)].norm() < MATRIX_TOLERANCE
        && (u[(0, 1)] - u[(1, 0)]).norm() < MATRIX_TOLERANCE
    {
        // Pure X (up to global phase): transversal flips.
        let steps =
            set.iter().map(|&q| Step::Gate { qubit: q, gate: Gate1::X }).collect();
        return PulseProgram::new(layout.len(), steps);
    }

    if set.len() == 1 {
        return PulseProgram::new(
            layout.len(),
            vec![Step::Gate { qubit: set[0], gate: Gate1::Unitary(*u) }],
        );
    }
    let (root, windows) = best_tree_windows(layout, grouping, i)?;
    let mut steps = Vec::new();
    // Each window is a product of commuting self-inverse CX gates, so the
    // decode pass is simply the window list in reverse order.
    for (f, gates) in windows.iter().rev() {
        steps.extend(window_steps(layout.len(), *f, gates));
    }
    steps.push(Step::Gate { qubit: root, gate: Gate1::Unitary(*u) });
    for (f, gates) in &windows {
        steps.extend(window_steps(layout.len(), *f, gates));
    }
    PulseProgram::new(layout.len(), steps)
}

/// Compile an evolution window of length `tau` during which every coupling
/// that touches one of the `subset` sets integrates to zero, while couplings
/// inside a set — and between sets outside the subset — run undisturbed.
///
/// Each chosen set is flipped according to a distinct square-wave sign
/// sequence (a Walsh function over 2^B equal sub-intervals); everything else
/// keeps the constant sequence. Any two distinct sequences are orthogonal
/// over the window, so cross terms integrate to zero, and qubits within one
/// set always share a sign, so intra-set terms are untouched. With a single
/// chosen set this reduces to one flip of the set at `tau/2` (undone at the
/// end).
pub fn compile_decouple(
    grouping: &Grouping,
    subset: &[usize],
    tau: f64,
) -> Result<PulseProgram, CompileError> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(CompileError::MalformedProgram(format!(
            "decoupling window must be positive, got {tau}"
        )));
    }
    let mut chosen: Vec<usize> = subset.to_vec();
    chosen.sort_unstable();
    chosen.dedup();
    if let Some(&bad) = chosen.iter().find(|&&s| s >= grouping.num_sets()) {
        return Err(CompileError::UnknownSet(bad));
    }
    let nq = grouping.num_qubits();
    let m = chosen.len();
    let bits = usize::BITS - m.leading_zeros(); // labels 1..=m need this many bits
    let slots = 1usize << bits;
    let sign = |label: usize, slot: usize| -> i8 {
        if (label & slot).count_ones() % 2 == 0 {
            1
        } else {
            -1
        }
    };
    let mut steps = Vec::new();
    let flip_set = |steps: &mut Vec<Step>, set: &[usize]| {
        for &q in set {
            steps.push(Step::Gate { qubit: q, gate: Gate1::X });
        }
    };
    for slot in 0..slots {
        if slot > 0 {
            for (k, &set_idx) in chosen.iter().enumerate() {
                if sign(k + 1, slot) != sign(k + 1, slot - 1) {
                    flip_set(&mut steps, grouping.set(set_idx));
                }
            }
        }
        steps.push(Step::Evolve { duration: tau / slots as f64, profile: vec![1.0; nq] });
    }
    for (k, &set_idx) in chosen.iter().enumerate() {
        if sign(k + 1, slots - 1) < 0 {
            flip_set(&mut steps, grouping.set(set_idx));
        }
    }
    PulseProgram::new(nq, steps)
}

/// Result of compiling a slot redistribution: the SWAP pulse sequence plus
/// the executed swap list.
#[derive(Debug, Clone)]
pub struct Delocalization {
    pub program: PulseProgram,
    pub swaps: Vec<(usize, usize)>,
}

impl Delocalization {
    pub fn swap_count(&self) -> usize {
        self.swaps.len()
    }
}

/// Compile the physical permutation that moves every slot of `from` to the
/// matching slot of `to`, as a sequence of SWAP gates (three CX windows each)
/// along a spanning tree of the coupling graph.
///
/// Routing settles one tree leaf at a time: the token destined for the leaf
/// walks there along the remaining tree, the leaf is frozen, and the rest of
/// the tree stays connected. On a chain of `k` qubits this performs at most
/// `k(k−1)/2` swaps for any permutation.
pub fn delocalize_grouping(
    layout: &PhysicalLayout,
    from: &Grouping,
    to: &Grouping,
) -> Result<Delocalization, CompileError> {
    check_grouping(layout, from)?;
    check_grouping(layout, to)?;
    if from.set_sizes() != to.set_sizes() {
        return Err(CompileError::GroupingShape(format!(
            "set sizes {:?} cannot be redistributed into {:?}",
            from.set_sizes(),
            to.set_sizes()
        )));
    }
    let n = layout.len();

    // want[p] = starting position of the token that must end at p.
    let mut want: Vec<Option<usize>> = vec![None; n];
    let mut is_source = vec![false; n];
    for i in 0..from.num_sets() {
        for (k, &src) in from.set(i).iter().enumerate() {
            let dst = to.set(i)[k];
            want[dst] = Some(src);
            is_source[src] = true;
        }
    }
    // Unconstrained positions keep their own token when possible; displaced
    // fillers pair up in index order.
    let mut spare: Vec<usize> = (0..n).filter(|&q| !is_source[q]).collect();
    spare.retain(|&q| {
        if want[q].is_none() {
            want[q] = Some(q);
            false
        } else {
            true
        }
    });
    let mut spare_iter = spare.into_iter();
    for slot in want.iter_mut() {
        if slot.is_none() {
            *slot = Some(spare_iter.next().expect("source/destination counts match"));
        }
    }
    let want: Vec<usize> = want.into_iter().map(|w| w.expect("filled above")).collect();

    // Spanning forest of the coupling graph.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b, _) in layout.coupled_pairs() {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut component = vec![usize::MAX; n];
    let mut tree_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = start;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if component[w] == usize::MAX {
                    component[w] = start;
                    tree_adj[v].push(w);
                    tree_adj[w].push(v);
                    queue.push_back(w);
                }
            }
        }
    }
    for (p, &src) in want.iter().enumerate() {
        if component[p] != component[src] {
            return Err(CompileError::RoutingDisconnected(src, p));
        }
    }

    let mut token_at: Vec<usize> = (0..n).collect();
    let mut pos_of: Vec<usize> = (0..n).collect();
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = tree_adj.iter().map(|a| a.len()).collect();
    let mut swaps: Vec<(usize, usize)> = Vec::new();
    let mut steps: Vec<Step> = Vec::new();
    let mut alive_count = n;
    while alive_count > 0 {
        let leaf = (0..n)
            .rev()
            .find(|&q| alive[q] && degree[q] <= 1)
            .expect("a finite tree always has a leaf");
        let token = want[leaf];
        if pos_of[token] != leaf {
            let path = tree_path(&tree_adj, &alive, pos_of[token], leaf);
            for pair in path.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let f = layout.coupling_strength(a, b)?;
                steps.extend(window_steps(n, f, &[(a, b)]));
                steps.extend(window_steps(n, f, &[(b, a)]));
                steps.extend(window_steps(n, f, &[(a, b)]));
                swaps.push((a, b));
                let (ta, tb) = (token_at[a], token_at[b]);
                token_at[a] = tb;
                token_at[b] = ta;
                pos_of[ta] = b;
                pos_of[tb] = a;
            }
        }
        alive[leaf] = false;
        alive_count -= 1;
        for &nb in &tree_adj[leaf] {
            if alive[nb] {
                degree[nb] -= 1;
            }
        }
        degree[leaf] = 0;
    }
    let program = PulseProgram::new(n, steps)?;
    Ok(Delocalization { program, swaps })
}

/// Path between two nodes of the (still-alive part of the) spanning forest.
fn tree_path(tree_adj: &[Vec<usize>], alive: &[bool], from: usize, to: usize) -> Vec<usize> {
    let mut prev: Vec<Option<usize>> = vec![None; tree_adj.len()];
    let mut queue = std::collections::VecDeque::from([from]);
    prev[from] = Some(from);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &w in &tree_adj[v] {
            if alive[w] && prev[w].is_none() {
                prev[w] = Some(v);
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur].expect("routing stays inside one component");
        path.push(cur);
    }
    path.reverse();
    path
}

/// An adaptive measurement program plus the index of the recorded outcome
/// that decides the logical result: outcome up means basis column 0, down
/// means column 1.
#[derive(Debug, Clone)]
pub struct MeasurementProgram {
    pub program: PulseProgram,
    pub deciding_measurement: usize,
}

fn basis_is_z_like(basis: &Mat2) -> bool {
    basis[(0, 1)].norm() < MATRIX_TOLERANCE && basis[(1, 0)].norm() < MATRIX_TOLERANCE
}

/// Compile a deterministic discrimination of the two orthogonal logical
/// states in `basis` (columns, expressed in the logical computational basis)
/// on set `i`.
///
/// Every qubit but the first is measured along X; an odd number of down
/// outcomes is repaired by a Z on the first qubit; the inverse basis rotation
/// then turns the final Z measurement of the first qubit into the logical
/// readout. The post-measurement state is a known computational product
/// state. When the basis is the logical Z basis itself, a single physical Z
/// measurement of the first qubit suffices and the state is left untouched.
pub fn compile_logical_measurement(
    grouping: &Grouping,
    i: usize,
    basis: &Mat2,
) -> Result<MeasurementProgram, CompileError> {
    if i >= grouping.num_sets() {
        return Err(CompileError::UnknownSet(i));
    }
    if !is_unitary(basis) {
        return Err(CompileError::NonOrthogonalBasis);
    }
    let set = grouping.set(i);
    let nq = grouping.num_qubits();
    if basis_is_z_like(basis) {
        let program = PulseProgram::new(nq, vec![Step::MeasureZ { qubit: set[0] }])?;
        return Ok(MeasurementProgram { program, deciding_measurement: 0 });
    }
    let root = set[0];
    let mut steps = Vec::new();
    for &q in &set[1..] {
        steps.push(Step::Gate { qubit: q, gate: Gate1::H });
        steps.push(Step::MeasureZ { qubit: q });
    }
    for m in 0..set.len() - 1 {
        steps.push(Step::Conditional {
            measurement: m,
            when_down: vec![Step::Gate { qubit: root, gate: Gate1::Zrot(PI) }],
            when_up: vec![],
        });
    }
    steps.push(Step::Gate { qubit: root, gate: Gate1::Unitary(basis.adjoint()) });
    steps.push(Step::MeasureZ { qubit: root });
    let deciding = set.len() - 1;
    Ok(MeasurementProgram {
        program: PulseProgram::new(nq, steps)?,
        deciding_measurement: deciding,
    })
}

/// Like [`compile_logical_measurement`], but afterwards rebuilds the measured
/// basis state on the set: the root is rotated back into the basis, every
/// other qubit is returned to spin up, and the set is re-entangled through
/// `tree`'s CX windows. The final state is the basis column selected by the
/// deciding outcome, up to a global phase.
pub fn compile_logical_measurement_restoring(
    layout: &PhysicalLayout,
    grouping: &Grouping,
    i: usize,
    basis: &Mat2,
    tree: &CxTree,
) -> Result<MeasurementProgram, CompileError> {
    check_grouping(layout, grouping)?;
    if i >= grouping.num_sets() {
        return Err(CompileError::UnknownSet(i));
    }
    if !is_unitary(basis) {
        return Err(CompileError::NonOrthogonalBasis);
    }
    let set = grouping.set(i);
    if tree.num_qubits() != set.len() {
        return Err(CompileError::BadTree(format!(
            "tree spans {} slots but set {i} has {}",
            tree.num_qubits(),
            set.len()
        )));
    }
    let nq = grouping.num_qubits();
    if basis_is_z_like(basis) {
        let program =
            PulseProgram::new(nq, vec![Step::MeasureZ { qubit: set[tree.root()] }])?;
        return Ok(MeasurementProgram { program, deciding_measurement: 0 });
    }
    let root = set[tree.root()];
    let others: Vec<usize> = (0..set.len()).filter(|&k| k != tree.root()).collect();
    let mut steps = Vec::new();
    for &k in &others {
        steps.push(Step::Gate { qubit: set[k], gate: Gate1::H });
        steps.push(Step::MeasureZ { qubit: set[k] });
    }
    for m in 0..others.len() {
        steps.push(Step::Conditional {
            measurement: m,
            when_down: vec![Step::Gate { qubit: root, gate: Gate1::Zrot(PI) }],
            when_up: vec![],
        });
    }
    steps.push(Step::Gate { qubit: root, gate: Gate1::Unitary(basis.adjoint()) });
    steps.push(Step::MeasureZ { qubit: root });
    let deciding = others.len();
    // Rebuild: root back into the basis, stray down qubits flipped up, then
    // re-entangle through the tree.
    steps.push(Step::Gate { qubit: root, gate: Gate1::Unitary(*basis) });
    for (m, &k) in others.iter().enumerate() {
        steps.push(Step::Conditional {
            measurement: m,
            when_down: vec![Step::Gate { qubit: set[k], gate: Gate1::X }],
            when_up: vec![],
        });
    }
    if set.len() > 1 {
        let phys: Vec<(usize, usize)> =
            tree.gates().iter().map(|&(c, t)| (set[c], set[t])).collect();
        for (f, gates) in layer_tree_windows(layout, root, &phys)? {
            steps.extend(window_steps(nq, f, &gates));
        }
    }
    Ok(MeasurementProgram {
        program: PulseProgram::new(nq, steps)?,
        deciding_measurement: deciding,
    })
}
