//! Physical layer: qubit geometry, the distance-dependent coupling law, and
//! the interaction matrices between ordered groups of qubits.
//!
//! Positions are stored in units of the lattice spacing δ, so a coupling
//! computed here with exponent α comes out in units of `J/δ^α`. All of the
//! published coupling values this crate reproduces are quoted in `J/δ`.

use nalgebra::DMatrix;
use thiserror::Error;

/// Distance comparison slack for the interaction cutoff, in units of δ.
///
/// Nearest-neighbour lattices place qubits at exact integer coordinates, but a
/// cutoff of exactly 1 would make the inclusion of unit-distance pairs hinge
/// on floating-point rounding. Any distance within this slack of the cutoff
/// counts as inside.
pub const CUTOFF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("self-coupling of qubit {0} is undefined")]
    SelfCoupling(usize),
    #[error("interaction matrices are canonical for i < j; got ({0}, {1})")]
    NonCanonicalPair(usize, usize),
    #[error("vector length {got} does not match set size {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("qubit index {0} out of bounds (layout has {1} qubits)")]
    QubitOutOfBounds(usize, usize),
    #[error("set index {0} out of bounds (grouping has {1} sets)")]
    SetOutOfBounds(usize, usize),
    #[error("positions {0} and {1} coincide")]
    DuplicatePositions(usize, usize),
    #[error("qubit {0} appears in more than one set")]
    OverlappingSets(usize),
    #[error("set {0} is empty")]
    EmptySet(usize),
}

/// A static arrangement of qubits with an isotropic coupling law
/// `J·x^(−α)` truncated beyond the cutoff radius `r`.
///
/// 3D coordinates are accepted so that target geometries (e.g. a cube of
/// logical qubits) can reuse the same distance helpers; every physical layout
/// in practice is planar with `z = 0`.
#[derive(Debug, Clone)]
pub struct PhysicalLayout {
    positions: Vec<[f64; 3]>,
    coupling_j: f64,
    alpha: f64,
    /// Cutoff radius in units of δ; `None` means unbounded range.
    cutoff: Option<f64>,
    spacing_delta: f64,
}

impl PhysicalLayout {
    /// Build a layout from explicit positions (units of δ).
    ///
    /// Rejects coincident positions: the coupling law diverges at distance
    /// zero and group slot ordering would become ambiguous.
    pub fn new(
        positions: Vec<[f64; 3]>,
        coupling_j: f64,
        alpha: f64,
        cutoff: Option<f64>,
        spacing_delta: f64,
    ) -> Result<Self, LatticeError> {
        assert!(coupling_j > 0.0, "coupling constant J must be positive");
        assert!(alpha >= 0.0, "coupling exponent must be non-negative");
        assert!(spacing_delta > 0.0, "lattice spacing must be positive");
        for a in 0..positions.len() {
            for b in (a + 1)..positions.len() {
                if distance(&positions[a], &positions[b]) < CUTOFF_TOLERANCE {
                    return Err(LatticeError::DuplicatePositions(a, b));
                }
            }
        }
        Ok(Self { positions, coupling_j, alpha, cutoff, spacing_delta })
    }

    /// Rectangular grid of `width × height` qubits at integer coordinates,
    /// row-major indexing (x fastest).
    pub fn square_grid(
        width: usize,
        height: usize,
        coupling_j: f64,
        alpha: f64,
        cutoff: Option<f64>,
        spacing_delta: f64,
    ) -> Self {
        let mut positions = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                positions.push([x as f64, y as f64, 0.0]);
            }
        }
        Self::new(positions, coupling_j, alpha, cutoff, spacing_delta)
            .expect("grid positions are distinct")
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, q: usize) -> [f64; 3] {
        self.positions[q]
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn coupling_j(&self) -> f64 {
        self.coupling_j
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    pub fn spacing_delta(&self) -> f64 {
        self.spacing_delta
    }

    /// Index of the qubit at integer grid coordinates, if one sits there.
    pub fn qubit_at(&self, x: i64, y: i64) -> Option<usize> {
        self.positions.iter().position(|p| {
            (p[0] - x as f64).abs() < CUTOFF_TOLERANCE
                && (p[1] - y as f64).abs() < CUTOFF_TOLERANCE
                && p[2].abs() < CUTOFF_TOLERANCE
        })
    }

    /// Coupling between two distinct qubits: `J·(d·δ)^(−α)` within the cutoff,
    /// zero beyond it.
    ///
    /// Positions (and the cutoff radius) are expressed in units of the lattice
    /// spacing `δ`, but the power law acts on the physical separation, so a
    /// nearest-neighbour pair couples at `J·δ^(−α)` rather than a bare `J`.
    pub fn coupling_strength(&self, a: usize, b: usize) -> Result<f64, LatticeError> {
        let n = self.len();
        if a >= n {
            return Err(LatticeError::QubitOutOfBounds(a, n));
        }
        if b >= n {
            return Err(LatticeError::QubitOutOfBounds(b, n));
        }
        if a == b {
            return Err(LatticeError::SelfCoupling(a));
        }
        let d = distance(&self.positions[a], &self.positions[b]);
        if let Some(r) = self.cutoff {
            if d > r + CUTOFF_TOLERANCE {
                return Ok(0.0);
            }
        }
        Ok(self.coupling_j * (d * self.spacing_delta).powf(-self.alpha))
    }

    /// All unordered qubit pairs with nonzero coupling.
    pub fn coupled_pairs(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for a in 0..self.len() {
            for b in (a + 1)..self.len() {
                let w = self.coupling_strength(a, b).expect("a < b");
                if w != 0.0 {
                    out.push((a, b, w));
                }
            }
        }
        out
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// A partition of (a subset of) the layout's qubits into ordered sets.
///
/// Slot order within a set is significant: it fixes the component order of the
/// logical vectors `s_i` and the rows/columns of every interaction matrix.
/// [`Grouping::from_cells`] sorts slots row-major by position (y, then x,
/// ascending) which is the convention all bundled fixtures use; explicit slot
/// lists are accepted untouched for reconstructed groupings that need a
/// different order.
#[derive(Debug, Clone)]
pub struct Grouping {
    sets: Vec<Vec<usize>>,
    /// qubit index → (set, slot)
    membership: Vec<Option<(usize, usize)>>,
}

impl Grouping {
    /// Build from explicit per-set qubit index lists, preserving slot order.
    pub fn new(layout: &PhysicalLayout, sets: Vec<Vec<usize>>) -> Result<Self, LatticeError> {
        let mut membership = vec![None; layout.len()];
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(LatticeError::EmptySet(i));
            }
            for (k, &q) in set.iter().enumerate() {
                if q >= layout.len() {
                    return Err(LatticeError::QubitOutOfBounds(q, layout.len()));
                }
                if membership[q].is_some() {
                    return Err(LatticeError::OverlappingSets(q));
                }
                membership[q] = Some((i, k));
            }
        }
        Ok(Self { sets, membership })
    }

    /// Build from per-set cell coordinate lists, sorting each set's slots
    /// row-major by position (y ascending, then x ascending).
    pub fn from_cells(
        layout: &PhysicalLayout,
        cell_sets: &[Vec<(i64, i64)>],
    ) -> Result<Self, LatticeError> {
        let mut sets = Vec::with_capacity(cell_sets.len());
        for cells in cell_sets {
            let mut ordered: Vec<(i64, i64)> = cells.clone();
            ordered.sort_by_key(|&(x, y)| (y, x));
            let mut set = Vec::with_capacity(ordered.len());
            for (x, y) in ordered {
                let q = layout
                    .qubit_at(x, y)
                    .unwrap_or_else(|| panic!("no qubit at grid cell ({x}, {y})"));
                set.push(q);
            }
            sets.push(set);
        }
        Self::new(layout, sets)
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn set_sizes(&self) -> Vec<usize> {
        self.sets.iter().map(|s| s.len()).collect()
    }

    /// Which (set, slot) a qubit belongs to, if any.
    pub fn membership(&self, qubit: usize) -> Option<(usize, usize)> {
        self.membership.get(qubit).copied().flatten()
    }

    /// Number of qubits in the underlying layout (grouped or not).
    pub fn num_qubits(&self) -> usize {
        self.membership.len()
    }
}

/// Interaction matrix `F_ij` between two sets: entry `(k, l)` is the physical
/// coupling between slot `k` of set `i` and slot `l` of set `j`.
#[derive(Debug, Clone)]
pub struct InteractionMatrix {
    pub i: usize,
    pub j: usize,
    pub f: DMatrix<f64>,
}

/// Compute `F_ij` for a canonical pair `i < j`.
pub fn interaction_matrix(
    layout: &PhysicalLayout,
    grouping: &Grouping,
    i: usize,
    j: usize,
) -> Result<InteractionMatrix, LatticeError> {
    let n = grouping.num_sets();
    if i >= n {
        return Err(LatticeError::SetOutOfBounds(i, n));
    }
    if j >= n {
        return Err(LatticeError::SetOutOfBounds(j, n));
    }
    if i >= j {
        return Err(LatticeError::NonCanonicalPair(i, j));
    }
    let si = grouping.set(i);
    let sj = grouping.set(j);
    let mut f = DMatrix::zeros(si.len(), sj.len());
    for (k, &a) in si.iter().enumerate() {
        for (l, &b) in sj.iter().enumerate() {
            f[(k, l)] = layout.coupling_strength(a, b)?;
        }
    }
    Ok(InteractionMatrix { i, j, f })
}

/// All interaction matrices of a grouping, in canonical pair order
/// `(0,1), (0,2), …, (N−2,N−1)`.
pub fn all_interaction_matrices(
    layout: &PhysicalLayout,
    grouping: &Grouping,
) -> Result<Vec<InteractionMatrix>, LatticeError> {
    let n = grouping.num_sets();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(interaction_matrix(layout, grouping, i, j)?);
        }
    }
    Ok(out)
}

/// The effective coupling `λ_ij = s_i^T F_ij s_j` between two logical qubits.
pub fn effective_coupling(
    s_i: &[f64],
    f: &InteractionMatrix,
    s_j: &[f64],
) -> Result<f64, LatticeError> {
    if s_i.len() != f.f.nrows() {
        return Err(LatticeError::DimensionMismatch { got: s_i.len(), want: f.f.nrows() });
    }
    if s_j.len() != f.f.ncols() {
        return Err(LatticeError::DimensionMismatch { got: s_j.len(), want: f.f.ncols() });
    }
    let mut acc = 0.0;
    for (k, &a) in s_i.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (l, &b) in s_j.iter().enumerate() {
            acc += a * f.f[(k, l)] * b;
        }
    }
    Ok(acc)
}

/// How a set's slots hang together under the physical coupling graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConnectivityClass {
    /// Every pair of slots in the set is directly coupled.
    FullyConnected,
    /// The intra-set coupling graph is connected but misses some pairs.
    Connected,
    /// At least two slots have no coupling path inside the set.
    Disconnected,
}

/// Classify a set by the connectivity of its internal interaction graph, and
/// return that graph as an adjacency list over slots.
pub fn classify_set(
    layout: &PhysicalLayout,
    grouping: &Grouping,
    i: usize,
) -> Result<(ConnectivityClass, Vec<Vec<usize>>), LatticeError> {
    let n = grouping.num_sets();
    if i >= n {
        return Err(LatticeError::SetOutOfBounds(i, n));
    }
    let set = grouping.set(i);
    let m = set.len();
    let mut adj = vec![Vec::new(); m];
    let mut edge_count = 0usize;
    for k in 0..m {
        for l in (k + 1)..m {
            if layout.coupling_strength(set[k], set[l])? != 0.0 {
                adj[k].push(l);
                adj[l].push(k);
                edge_count += 1;
            }
        }
    }
    let class = if edge_count == m * (m - 1) / 2 {
        ConnectivityClass::FullyConnected
    } else if connected_components(&adj) == 1 {
        ConnectivityClass::Connected
    } else {
        ConnectivityClass::Disconnected
    };
    Ok((class, adj))
}

fn connected_components(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_grid(n: usize) -> PhysicalLayout {
        PhysicalLayout::square_grid(n, n, 1.0, 1.0, None, 1.0)
    }

    #[test]
    fn coupling_follows_inverse_distance() {
        let lay = unit_grid(4);
        assert_relative_eq!(lay.coupling_strength(0, 1).unwrap(), 1.0);
        assert_relative_eq!(lay.coupling_strength(0, 2).unwrap(), 0.5);
        // diagonal neighbour at √2
        assert_relative_eq!(lay.coupling_strength(0, 5).unwrap(), 1.0 / 2f64.sqrt());
    }

    #[test]
    fn cutoff_truncates_to_nearest_neighbours() {
        let lay = PhysicalLayout::square_grid(4, 4, 1.0, 1.0, Some(1.0), 1.0);
        assert_relative_eq!(lay.coupling_strength(0, 1).unwrap(), 1.0);
        assert_eq!(lay.coupling_strength(0, 2).unwrap(), 0.0);
        assert_eq!(lay.coupling_strength(0, 5).unwrap(), 0.0); // diagonal: √2 > 1
    }

    #[test]
    fn self_coupling_is_an_error() {
        let lay = unit_grid(2);
        assert!(matches!(lay.coupling_strength(1, 1), Err(LatticeError::SelfCoupling(1))));
    }

    #[test]
    fn quadrant_grouping_weighted_coefficients() {
        // 4×4 lattice split into 2×2 quadrant blocks; with s_1 = all-ones the
        // weighted column sums of F_12 are the known four coefficients.
        let lay = unit_grid(4);
        let grouping = quadrants(&lay);
        let f12 = interaction_matrix(&lay, &grouping, 0, 1).unwrap();
        let coeffs: Vec<f64> = (0..4).map(|l| (0..4).map(|k| f12.f[(k, l)]).sum()).collect();
        let expect = [2.654, 1.597, 2.654, 1.597];
        for (c, e) in coeffs.iter().zip(expect) {
            assert!((c - e).abs() < 5e-4, "coefficient {c} vs {e}");
        }
    }

    fn quadrants(lay: &PhysicalLayout) -> Grouping {
        let blocks: Vec<Vec<(i64, i64)>> = [(0, 0), (2, 0), (0, 2), (2, 2)]
            .iter()
            .map(|&(cx, cy)| {
                (0..2).flat_map(|dy| (0..2).map(move |dx| (cx + dx, cy + dy))).collect()
            })
            .collect();
        Grouping::from_cells(lay, &blocks).unwrap()
    }

    #[test]
    fn effective_coupling_matches_double_sum() {
        let lay = unit_grid(4);
        let grouping = quadrants(&lay);
        let f = interaction_matrix(&lay, &grouping, 0, 2).unwrap();
        let s1 = [0.3, -0.7, 0.2, 0.9];
        let s3 = [-0.5, 0.1, 0.8, -0.2];
        let direct: f64 = grouping
            .set(0)
            .iter()
            .enumerate()
            .flat_map(|(k, &a)| {
                grouping.set(2).iter().enumerate().map(move |(l, &b)| (k, a, l, b))
            })
            .map(|(k, a, l, b)| s1[k] * lay.coupling_strength(a, b).unwrap() * s3[l])
            .sum();
        assert_relative_eq!(
            effective_coupling(&s1, &f, &s3).unwrap(),
            direct,
            epsilon = 1e-12
        );
    }

    #[test]
    fn connectivity_classes() {
        // unbounded range: everything fully connected
        let lay = unit_grid(4);
        let g = quadrants(&lay);
        assert_eq!(classify_set(&lay, &g, 0).unwrap().0, ConnectivityClass::FullyConnected);

        // nearest-neighbour range: a 2×2 block is connected but not fully
        let nn = PhysicalLayout::square_grid(4, 4, 1.0, 1.0, Some(1.0), 1.0);
        let g = quadrants(&nn);
        assert_eq!(classify_set(&nn, &g, 0).unwrap().0, ConnectivityClass::Connected);

        // two far-apart qubits with a tight cutoff: disconnected
        let lay = PhysicalLayout::new(
            vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]],
            1.0,
            1.0,
            Some(1.0),
            1.0,
        )
        .unwrap();
        let g = Grouping::new(&lay, vec![vec![0, 1]]).unwrap();
        assert_eq!(classify_set(&lay, &g, 0).unwrap().0, ConnectivityClass::Disconnected);
    }

    #[test]
    fn canonical_pair_enforced() {
        let lay = unit_grid(4);
        let g = quadrants(&lay);
        assert!(interaction_matrix(&lay, &g, 2, 1).is_err());
        assert!(interaction_matrix(&lay, &g, 1, 1).is_err());
    }

    #[test]
    fn sign_antisymmetry() {
        let lay = unit_grid(4);
        let g = quadrants(&lay);
        let f = interaction_matrix(&lay, &g, 0, 1).unwrap();
        let s = [0.2, 0.4, -0.6, 0.8];
        let t = [1.0, -0.3, 0.5, 0.7];
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        assert_relative_eq!(
            effective_coupling(&neg, &f, &t).unwrap(),
            -effective_coupling(&s, &f, &t).unwrap(),
            epsilon = 1e-14
        );
    }
}
