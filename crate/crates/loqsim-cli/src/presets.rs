//! Named building blocks the bundled scenarios refer to: qubit groupings on
//! their canonical lattices, target-pattern topologies, and the repeating-cell
//! bond classes of the periodic constructions.
//!
//! Everything here expands to explicit data (slot lists, edge lists, bilinear
//! constraints) before any computation runs, so a serialized scenario never
//! depends on this module to be interpreted.

use loqsim::pattern::{BilinearProblem, Constraint, PatternError, Term};
use nalgebra::DMatrix;
use std::f64::consts::FRAC_1_SQRT_2;

/// Explicit qubit sets for a named grouping, together with the square-lattice
/// dimensions it is defined on. Slot order within each set is part of the
/// definition — published vectors index into it.
pub fn grouping_sets(name: &str) -> Option<(usize, usize, Vec<Vec<usize>>)> {
    // accept the figure-style spellings used in scenario files
    let name = match name {
        "G1" => "g1",
        "G2" => "g2",
        "fig8b" => "nn4-fr",
        "fig8c" => "nn5-fr",
        other => other,
    };
    let sets = match name {
        // 4×4 lattice split into the four corner 2×2 blocks, row-major slots.
        "g1" => (4, 4, vec![
            vec![0, 1, 4, 5],
            vec![2, 3, 6, 7],
            vec![8, 9, 12, 13],
            vec![10, 11, 14, 15],
        ]),
        // 4×4 lattice, each set one translate of the 2×2 superlattice,
        // row-major slots. Reverse-engineered: this is the unique slot
        // assignment under which every published spread-grouping component
        // row realizes the same topology as its quadrant counterpart.
        "g2" => (4, 4, vec![
            vec![0, 2, 8, 10],
            vec![1, 3, 9, 11],
            vec![4, 6, 12, 14],
            vec![5, 7, 13, 15],
        ]),
        // 8×8 lattice tiled by eight 4×2 blocks (two per block-row),
        // row-major slots. Block (bx, by) plays cube vertex (bx, by%2, by/2).
        "fig5-cube" => (8, 8, blocks(8, 4, 2)),
        // 9×9 lattice tiled by nine 3×3 tiles, row-major slots; tile (tx, ty)
        // is logical qubit ty·3+tx of the 3×3 logical grid.
        "fig5-nn9" => (9, 9, blocks(9, 3, 3)),
        // 4×4 nearest-neighbour lattice, four interleaved sets chosen so
        // every set pair shares exactly four coupled qubit pairs.
        "nn4-fr" => (4, 4, cells_to_sets(4, &[
            &[(0, 0), (2, 0), (1, 1), (3, 1)],
            &[(1, 0), (0, 2), (3, 2), (2, 3)],
            &[(3, 0), (0, 1), (2, 2), (1, 3)],
            &[(2, 1), (1, 2), (0, 3), (3, 3)],
        ])),
        // 5×5 variant of the same idea: five sets, again four shared coupled
        // pairs per set pair.
        "nn5-fr" => (5, 5, cells_to_sets(5, &[
            &[(0, 0), (2, 0), (1, 1), (3, 1), (0, 2)],
            &[(1, 0), (4, 0), (2, 2), (0, 3), (3, 3)],
            &[(3, 0), (1, 2), (4, 2), (2, 3), (4, 4)],
            &[(0, 1), (3, 2), (1, 3), (0, 4), (2, 4)],
            &[(2, 1), (4, 1), (4, 3), (1, 4), (3, 4)],
        ])),
        _ => return None,
    };
    Some(sets)
}

fn blocks(width: usize, block_w: usize, block_h: usize) -> Vec<Vec<usize>> {
    let mut sets = Vec::new();
    for by in (0..width).step_by(block_h) {
        for bx in (0..width).step_by(block_w) {
            let mut set = Vec::with_capacity(block_w * block_h);
            for y in by..by + block_h {
                for x in bx..bx + block_w {
                    set.push(y * width + x);
                }
            }
            sets.push(set);
        }
    }
    sets
}

fn cells_to_sets(width: usize, cells: &[&[(usize, usize)]]) -> Vec<Vec<usize>> {
    cells.iter().map(|set| set.iter().map(|&(x, y)| y * width + x).collect()).collect()
}

/// Expand a named target topology into `(i, j, relative weight)` edges.
/// Unlisted pairs are structural zeros.
pub fn pattern_edges(name: &str) -> Option<Vec<(usize, usize, f64)>> {
    let edges = match name {
        // The 4-set toy patterns, with logical qubits at the corners of a
        // square (0 SW, 1 SE, 2 NW, 3 NE). Topologies were cross-derived
        // from the published component tables of both groupings, which
        // agree on every row: one vertical edge, a star, the two vertical
        // edges, all pairs, the four sides, the two diagonals.
        "fig4-c" => vec![(0, 2, 1.0)],
        "fig4-d" => vec![(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)],
        "fig4-e" => vec![(0, 2, 1.0), (1, 3, 1.0)],
        "fig4-f" => all_pairs(4),
        "fig4-g" => vec![(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
        "fig4-h" => vec![(0, 3, 1.0), (1, 2, 1.0)],
        "cube-nn" => cube_edges(false),
        "cube-full" => cube_edges(true),
        "grid3-nn" => grid3_edges(false),
        "grid3-diag" => grid3_edges(true),
        "all-pairs-4" => all_pairs(4),
        "all-pairs-5" => all_pairs(5),
        _ => return None,
    };
    Some(edges)
}

/// Cube vertex of logical qubit `i` under the fig5-cube block assignment.
pub fn cube_vertex(i: usize) -> [f64; 3] {
    let (bx, by) = (i % 2, i / 2);
    [bx as f64, (by % 2) as f64, (by / 2) as f64]
}

fn cube_edges(full_range: bool) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..8 {
        for j in i + 1..8 {
            let (a, b) = (cube_vertex(i), cube_vertex(j));
            let d2: f64 = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum();
            if d2 == 1.0 {
                edges.push((i, j, 1.0));
            } else if full_range {
                edges.push((i, j, 1.0 / d2.sqrt()));
            }
        }
    }
    edges
}

fn grid3_edges(diagonals: bool) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..9usize {
        for j in i + 1..9 {
            let (dx, dy) = (
                (i % 3) as i64 - (j % 3) as i64,
                (i / 3) as i64 - (j / 3) as i64,
            );
            match dx * dx + dy * dy {
                1 => edges.push((i, j, 1.0)),
                2 if diagonals => edges.push((i, j, FRAC_1_SQRT_2)),
                _ => {}
            }
        }
    }
    edges
}

fn all_pairs(n: usize) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j, 1.0));
        }
    }
    edges
}

// ---------------------------------------------------------------------------
// Repeating-cell bond classes
// ---------------------------------------------------------------------------

/// One bilinear product `weight · s[block_a][slot_a] · s[block_b][slot_b]`.
pub type ClassTerm = (usize, usize, usize, usize, f64);

/// Bond-class structure of a periodic construction: every coupling of the
/// infinite pattern belongs to one of `labels`, and its strength is the
/// listed sum of vector-component products. `patch` is a finite window of
/// the logical lattice for rendering, with one class index per edge.
pub struct ClassGeometry {
    pub labels: Vec<&'static str>,
    pub block_names: Vec<&'static str>,
    pub block_dims: Vec<usize>,
    pub terms: Vec<Vec<ClassTerm>>,
    pub patch_nodes: Vec<(f64, f64)>,
    pub patch_edges: Vec<(usize, usize, usize)>,
}

/// Geometry for a named periodic construction.
///
/// * `hexagonal` — 2×2 blocks of a n.n. square lattice, checkerboard
///   alternation of two subspaces; slots row-major in each block. Three of
///   the four block-bond directions survive, giving the honeycomb.
/// * `triangular` — 4×2 bricks of a n.n. square lattice, odd brick-rows
///   shifted by two sites; rows share a subspace and diagonals alternate
///   the two. Six bond classes: horizontal per row parity, and the two
///   diagonal directions per row parity. Each bond carries two physical
///   couplings, so the uniform all-ones subspace realizes strength 2.
/// * `pentomino` — plus-pentomino tiling of a square lattice with n.n. and
///   diagonal couplings, one shared subspace, slots ordered centre, east,
///   north, west, south. The logical lattice is square (rotated by
///   atan 1/2) with four tunable bond directions.
pub fn class_geometry(name: &str) -> Option<ClassGeometry> {
    match name {
        "hexagonal" => Some(hexagonal_geometry()),
        "triangular" => Some(triangular_geometry()),
        "pentomino" => Some(pentomino_geometry()),
        _ => None,
    }
}

fn hexagonal_geometry() -> ClassGeometry {
    let (a, b) = (0, 1);
    let terms = vec![
        // east of an A block: its right column meets B's left column
        vec![(a, 1, b, 0, 1.0), (a, 3, b, 2, 1.0)],
        // north: A's top row meets B's bottom row
        vec![(a, 2, b, 0, 1.0), (a, 3, b, 1, 1.0)],
        // south
        vec![(a, 0, b, 2, 1.0), (a, 1, b, 3, 1.0)],
        // west
        vec![(a, 0, b, 1, 1.0), (a, 2, b, 3, 1.0)],
    ];
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let side = 4usize;
    let at = |bx: usize, by: usize| by * side + bx;
    for by in 0..side {
        for bx in 0..side {
            nodes.push((2.0 * bx as f64 + 0.5, 2.0 * by as f64 + 0.5));
        }
    }
    for by in 0..side {
        for bx in 0..side {
            let a_here = (bx + by) % 2 == 0;
            if bx + 1 < side {
                edges.push((at(bx, by), at(bx + 1, by), if a_here { 0 } else { 3 }));
            }
            if by + 1 < side {
                edges.push((at(bx, by), at(bx, by + 1), if a_here { 1 } else { 2 }));
            }
        }
    }
    ClassGeometry {
        labels: vec!["E", "N", "S", "W"],
        block_names: vec!["s_A", "s_B"],
        block_dims: vec![4, 4],
        terms,
        patch_nodes: nodes,
        patch_edges: edges,
    }
}

fn triangular_geometry() -> ClassGeometry {
    let (a, b) = (0, 1);
    let terms = vec![
        // horizontal within an even (A) brick row: right column of one brick
        // to the left column of the next, both rows of the brick
        vec![(a, 3, a, 0, 1.0), (a, 7, a, 4, 1.0)],
        vec![(b, 3, b, 0, 1.0), (b, 7, b, 4, 1.0)],
        // "/" up-right from an A brick: its top-right half under the B brick
        // shifted +2 above
        vec![(a, 6, b, 0, 1.0), (a, 7, b, 1, 1.0)],
        // "/" up-right from a B brick
        vec![(b, 6, a, 0, 1.0), (b, 7, a, 1, 1.0)],
        // "\" up-left from an A brick
        vec![(a, 4, b, 2, 1.0), (a, 5, b, 3, 1.0)],
        // "\" up-left from a B brick
        vec![(b, 4, a, 2, 1.0), (b, 5, a, 3, 1.0)],
    ];
    let side = 4usize;
    let at = |bx: usize, by: usize| by * side + bx;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for by in 0..side {
        for bx in 0..side {
            let shift = if by % 2 == 1 { 2.0 } else { 0.0 };
            nodes.push((4.0 * bx as f64 + shift + 1.5, 2.0 * by as f64 + 0.5));
        }
    }
    for by in 0..side {
        let even = by % 2 == 0;
        for bx in 0..side {
            if bx + 1 < side {
                edges.push((at(bx, by), at(bx + 1, by), if even { 0 } else { 1 }));
            }
            if by + 1 < side {
                // up-right neighbour
                let ne = if even { Some(bx) } else { bx.checked_add(1).filter(|&v| v < side) };
                if let Some(nx) = ne {
                    edges.push((at(bx, by), at(nx, by + 1), if even { 2 } else { 3 }));
                }
                // up-left neighbour
                let nw = if even { bx.checked_sub(1) } else { Some(bx) };
                if let Some(nx) = nw {
                    edges.push((at(bx, by), at(nx, by + 1), if even { 4 } else { 5 }));
                }
            }
        }
    }
    ClassGeometry {
        labels: vec!["H_A", "H_B", "NE_A", "NE_B", "NW_A", "NW_B"],
        block_names: vec!["s_A", "s_B"],
        block_dims: vec![8, 8],
        terms,
        patch_nodes: nodes,
        patch_edges: edges,
    }
}

fn pentomino_geometry() -> ClassGeometry {
    const W: f64 = FRAC_1_SQRT_2;
    let terms = vec![
        // along +u = (2, 1): five physical couplings, two of them diagonal
        vec![
            (0, 0, 0, 1, W),
            (0, 0, 0, 3, W),
            (0, 1, 0, 3, 1.0),
            (0, 1, 0, 4, 1.0),
            (0, 2, 0, 3, 1.0),
        ],
        // along +v = (−1, 2)
        vec![
            (0, 0, 0, 2, W),
            (0, 0, 0, 4, W),
            (0, 1, 0, 2, 1.0),
            (0, 2, 0, 4, 1.0),
            (0, 3, 0, 4, 1.0),
        ],
        // logical diagonal u+v: single diagonal coupling
        vec![(0, 2, 0, 4, W)],
        // logical diagonal u−v
        vec![(0, 1, 0, 3, W)],
    ];
    let side = 4usize;
    let at = |i: usize, j: usize| j * side + i;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for j in 0..side {
        for i in 0..side {
            nodes.push((
                2.0 * i as f64 - j as f64,
                i as f64 + 2.0 * j as f64,
            ));
        }
    }
    for j in 0..side {
        for i in 0..side {
            if i + 1 < side {
                edges.push((at(i, j), at(i + 1, j), 0));
            }
            if j + 1 < side {
                edges.push((at(i, j), at(i, j + 1), 1));
            }
            if i + 1 < side && j + 1 < side {
                edges.push((at(i, j), at(i + 1, j + 1), 2));
            }
            if i + 1 < side && j >= 1 {
                edges.push((at(i, j), at(i + 1, j - 1), 3));
            }
        }
    }
    ClassGeometry {
        labels: vec!["U", "V", "D1", "D2"],
        block_names: vec!["s"],
        block_dims: vec![5],
        terms,
        patch_nodes: nodes,
        patch_edges: edges,
    }
}

/// Evaluate every class strength for the given per-block vectors.
pub fn class_values(geometry: &ClassGeometry, vectors: &[Vec<f64>]) -> Vec<f64> {
    geometry
        .terms
        .iter()
        .map(|terms| {
            terms
                .iter()
                .map(|&(ba, sa, bb, sb, w)| w * vectors[ba][sa] * vectors[bb][sb])
                .sum()
        })
        .collect()
}

/// Lower the classes onto a bilinear problem with the given per-class ratio
/// coefficients (one per label, in order).
pub fn class_problem(
    geometry: &ClassGeometry,
    coefficients: &[f64],
) -> Result<BilinearProblem, PatternError> {
    let constraints = geometry
        .labels
        .iter()
        .zip(coefficients)
        .zip(&geometry.terms)
        .map(|((label, &coefficient), terms)| {
            let mut grouped: Vec<Term> = Vec::new();
            for &(ba, sa, bb, sb, w) in terms {
                if let Some(t) = grouped.iter_mut().find(|t| t.left == ba && t.right == bb) {
                    t.matrix[(sa, sb)] += w;
                } else {
                    let mut m =
                        DMatrix::zeros(geometry.block_dims[ba], geometry.block_dims[bb]);
                    m[(sa, sb)] = w;
                    grouped.push(Term { left: ba, right: bb, matrix: m });
                }
            }
            Constraint { label: label.to_string(), coefficient, terms: grouped }
        })
        .collect();
    BilinearProblem::new(geometry.block_dims.clone(), constraints)
}
