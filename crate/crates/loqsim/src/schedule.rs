//! Timed X-flip schedules that dial in fractional effective spin values.
//!
//! Under a pairwise ZZ interaction, flipping qubit `q` partway through an
//! evolution window multiplies every coupling involving `q` by an effective
//! spin `s ∈ [−1, 1]` set by the flip time. Concatenating such flips for all
//! qubits realizes arbitrary per-qubit spin values over one window of length
//! `τ`. This module builds those schedules three ways:
//!
//! * [`sequential_schedule`] — fully general, one qubit at a time; the
//!   recursive interleaving lands on a reflected-Gray-code segment structure
//!   with at most `2^m` flips.
//! * [`parallel_schedule`] — qubits of the same color class of the
//!   interaction graph don't couple, so an entire class flips within a
//!   single pass; flip counts drop to `O((m/κ)^κ)` for `κ` colors.
//! * [`grouped_parallel_schedule`] — same trick with the logical sets
//!   playing the role of color classes. Intra-set couplings are *not*
//!   preserved, which is fine: the logical subspace never sees them.
//!
//! Flips are idealized as instantaneous. Event times are stored as exact
//! binary fractions of `τ` computed in closed form (products of `(1±s)/2`),
//! never by accumulating interval sums, so coinciding flips cancel exactly
//! (`X·X = 1`) and degenerate zero-length segments drop out bit-for-bit.
//!
//! [`verify_schedule`] is the independent oracle: it walks the event list,
//! accumulates every pair's signed evolution weight, and reports the worst
//! phase deviation from the target over all computational basis states.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::lattice::{Grouping, PhysicalLayout};
use crate::par;

/// Verification enumerates `2^m` basis states; keep the cap generous but sane.
const VERIFY_QUBIT_CAP: usize = 14;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("spin for qubit {qubit} is {value}, outside [-1, 1]")]
    SpinOutOfRange { qubit: usize, value: f64 },
    #[error("evolution window must be positive, got {0}")]
    NonPositiveWindow(f64),
    #[error("expected {want} spins, got {got}")]
    SpinCount { got: usize, want: usize },
    #[error("qubits {a} and {b} share a color but are physically coupled")]
    ImproperColoring { a: usize, b: usize },
    #[error("qubit {qubit} must appear in exactly one color class")]
    ColoringCoverage { qubit: usize },
    #[error("verification supports at most {max} qubits, got {got}")]
    TooManyQubits { got: usize, max: usize },
}

/// One instant of the schedule: all listed qubits flip simultaneously.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipEvent {
    /// Time as a fraction of the window, in `[0, 1]`.
    pub fraction: f64,
    /// Sorted, deduplicated qubit indices.
    pub qubits: Vec<usize>,
}

/// A complete flip program over one evolution window.
#[derive(Debug, Clone)]
pub struct FlipSchedule {
    window: f64,
    events: Vec<FlipEvent>,
    target_spins: Vec<f64>,
    flip_count: usize,
}

impl FlipSchedule {
    /// Window length `τ`.
    pub fn window(&self) -> f64 {
        self.window
    }

    /// Events in strictly ascending time order; simultaneous flips share one
    /// event. Boundary events at fractions 0 and 1 are legal (they realize
    /// `s = ±1` edge cases).
    pub fn events(&self) -> &[FlipEvent] {
        &self.events
    }

    pub fn target_spins(&self) -> &[f64] {
        &self.target_spins
    }

    /// Total number of single-qubit X applications, `χ`.
    pub fn flip_count(&self) -> usize {
        self.flip_count
    }

    pub fn num_qubits(&self) -> usize {
        self.target_spins.len()
    }

    /// Constant-parity intervals: `(Δfraction, σ)` with `σ_q ∈ {+1, −1}`.
    pub fn parity_intervals(&self) -> Vec<(f64, Vec<i8>)> {
        let m = self.num_qubits();
        let mut sigma = vec![1i8; m];
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut cursor = 0.0;
        for e in &self.events {
            if e.fraction > cursor {
                out.push((e.fraction - cursor, sigma.clone()));
                cursor = e.fraction;
            }
            for &q in &e.qubits {
                sigma[q] = -sigma[q];
            }
        }
        if cursor < 1.0 {
            out.push((1.0 - cursor, sigma.clone()));
        }
        out
    }

    /// Effective pair weights `W_qr = Σ_intervals Δfraction·σ_q·σ_r`.
    ///
    /// A schedule is correct for a pair exactly when `W_qr` equals the spin
    /// product `s_q·s_r` (the realized evolution is then `f_qr·s_q·s_r·τ`).
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let m = self.num_qubits();
        let mut w = DMatrix::zeros(m, m);
        for (dt, sigma) in self.parity_intervals() {
            for q in 0..m {
                for r in 0..m {
                    w[(q, r)] += dt * f64::from(sigma[q] * sigma[r]);
                }
            }
        }
        w
    }

    /// Plain-text event table (columns: time as a fraction of `τ`, qubits),
    /// suitable for feeding external pulse tooling.
    pub fn event_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# window = {}\n# flips = {}\n", self.window, self.flip_count));
        out.push_str("# t/window\tqubits\n");
        for e in &self.events {
            let qubits: Vec<String> = e.qubits.iter().map(|q| q.to_string()).collect();
            out.push_str(&format!("{:.15}\t{}\n", e.fraction, qubits.join(",")));
        }
        out
    }

    /// Merge raw flips: sort by time, cancel pairs of identical flips at the
    /// same instant, group the survivors into simultaneous events.
    fn from_raw(
        mut raw: Vec<(f64, usize)>,
        target_spins: Vec<f64>,
        window: f64,
    ) -> Self {
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut events: Vec<FlipEvent> = Vec::new();
        let mut idx = 0;
        while idx < raw.len() {
            let t = raw[idx].0;
            let mut qubits = Vec::new();
            while idx < raw.len() && raw[idx].0 == t {
                let q = raw[idx].1;
                let mut parity = 0usize;
                while idx < raw.len() && raw[idx].0 == t && raw[idx].1 == q {
                    parity ^= 1;
                    idx += 1;
                }
                if parity == 1 {
                    qubits.push(q);
                }
            }
            if !qubits.is_empty() {
                events.push(FlipEvent { fraction: t, qubits });
            }
        }
        let flip_count = events.iter().map(|e| e.qubits.len()).sum();
        Self { window, events, target_spins, flip_count }
    }
}

fn check_spins(spins: &[f64]) -> Result<(), ScheduleError> {
    for (qubit, &value) in spins.iter().enumerate() {
        if !(value.abs() <= 1.0) {
            return Err(ScheduleError::SpinOutOfRange { qubit, value });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// A class together with each member's flip fraction `(1+s)/2`.
struct Level {
    qubits: Vec<usize>,
    rels: Vec<f64>,
}

/// Recursive window construction over a stack of classes, innermost first.
///
/// Returns raw flips in the normalized window `[0, 1]`, un-mirrored. Level
/// `j` flips each of its qubits once inside the window and once at the
/// window's end; the sub-windows between those single flips carry the
/// construction for levels below, alternating between the forward and the
/// time-mirrored variant. The mirrored variant realizes the same phases but
/// places its group flip at the window *start* — so at every forward→mirror
/// junction the group flips coincide and cancel, which is where the flip
/// count reduction comes from.
fn build_levels(levels: &[Level]) -> Vec<(f64, usize)> {
    let Some((top, rest)) = levels.split_last() else {
        return Vec::new();
    };
    let mut out = Vec::new();

    // This level's own flips: one timed single per qubit, plus the whole
    // class again at the end of the window.
    let mut singles: Vec<(f64, usize)> =
        top.rels.iter().cloned().zip(top.qubits.iter().cloned()).collect();
    singles.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.extend(singles.iter().cloned());
    out.extend(top.qubits.iter().map(|&q| (1.0, q)));

    // Sub-windows between consecutive single-flip times.
    let inner = build_levels(rest);
    if inner.is_empty() {
        return out;
    }
    let mut boundaries = vec![0.0];
    boundaries.extend(singles.iter().map(|&(t, _)| t));
    boundaries.push(1.0);
    for k in 0..boundaries.len() - 1 {
        let (b0, b1) = (boundaries[k], boundaries[k + 1]);
        let width = b1 - b0;
        if width <= 0.0 {
            // Degenerate segment: all its flips would cancel pairwise.
            continue;
        }
        let mirrored = k % 2 == 1;
        for &(f, q) in &inner {
            let f = if mirrored { 1.0 - f } else { f };
            // Map endpoints exactly so junction flips cancel bit-for-bit.
            let t = if f == 0.0 {
                b0
            } else if f == 1.0 {
                b1
            } else {
                b0 + width * f
            };
            out.push((t, q));
        }
    }
    out
}

fn schedule_from_levels(
    levels: &[Level],
    spins: &[f64],
    tau: f64,
) -> Result<FlipSchedule, ScheduleError> {
    if tau <= 0.0 {
        return Err(ScheduleError::NonPositiveWindow(tau));
    }
    check_spins(spins)?;
    let raw = build_levels(levels);
    Ok(FlipSchedule::from_raw(raw, spins.to_vec(), tau))
}

/// One-qubit-at-a-time schedule: works for any interaction graph.
///
/// The recursion unrolls into `2^m` constant-parity segments visited in
/// reflected-Gray-code order, the segment with parity signs `σ` lasting
/// `τ·Π_q (1+σ_q·s_q)/2`; qubit 0 flips most often. At most `2^m` flips,
/// fewer when spins sit at `±1`.
pub fn sequential_schedule(spins: &[f64], tau: f64) -> Result<FlipSchedule, ScheduleError> {
    let levels: Vec<Level> = spins
        .iter()
        .enumerate()
        .map(|(q, &s)| Level { qubits: vec![q], rels: vec![(1.0 + s) / 2.0] })
        .collect();
    schedule_from_levels(&levels, spins, tau)
}

/// A proper coloring of the physical interaction graph.
///
/// Constructing one validates properness (no two coupled qubits share a
/// color), so a `Coloring` value is proof the parallel construction applies.
/// Classes are kept sorted by ascending size — the flip-count recursion
/// assumes that order, and smaller classes belong innermost.
#[derive(Debug, Clone)]
pub struct Coloring {
    classes: Vec<Vec<usize>>,
    colors: Vec<usize>,
}

impl Coloring {
    pub fn new(layout: &PhysicalLayout, classes: Vec<Vec<usize>>) -> Result<Self, ScheduleError> {
        let m = layout.len();
        let mut colors = vec![usize::MAX; m];
        for (c, class) in classes.iter().enumerate() {
            for &q in class {
                if q >= m || colors[q] != usize::MAX {
                    return Err(ScheduleError::ColoringCoverage { qubit: q.min(m) });
                }
                colors[q] = c;
            }
        }
        if let Some(q) = colors.iter().position(|&c| c == usize::MAX) {
            return Err(ScheduleError::ColoringCoverage { qubit: q });
        }
        for (a, b, _) in layout.coupled_pairs() {
            if colors[a] == colors[b] {
                return Err(ScheduleError::ImproperColoring { a, b });
            }
        }
        let mut classes = classes;
        classes.sort_by_key(Vec::len);
        let mut colors = vec![0; m];
        for (c, class) in classes.iter().enumerate() {
            for &q in class {
                colors[q] = c;
            }
        }
        Ok(Self { classes, colors })
    }

    /// Greedy coloring, highest-degree qubits first. Proper by construction;
    /// not necessarily minimal, which only affects the flip count.
    pub fn greedy(layout: &PhysicalLayout) -> Self {
        let m = layout.len();
        let mut adjacency = vec![Vec::new(); m];
        for (a, b, _) in layout.coupled_pairs() {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&q| std::cmp::Reverse(adjacency[q].len()));
        let mut color_of = vec![usize::MAX; m];
        let mut num_colors = 0;
        for q in order {
            let mut used = vec![false; num_colors + 1];
            for &r in &adjacency[q] {
                if color_of[r] != usize::MAX {
                    used[color_of[r].min(num_colors)] = true;
                }
            }
            let c = (0..).find(|&c| c >= used.len() || !used[c]).unwrap();
            color_of[q] = c;
            num_colors = num_colors.max(c + 1);
        }
        let mut classes = vec![Vec::new(); num_colors];
        for (q, &c) in color_of.iter().enumerate() {
            classes[c].push(q);
        }
        Self::new(layout, classes).expect("greedy coloring is proper by construction")
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    /// Class sizes in ascending order.
    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }

    pub fn color_of(&self, qubit: usize) -> usize {
        self.colors[qubit]
    }
}

fn levels_from_classes(classes: &[Vec<usize>], spins: &[f64]) -> Vec<Level> {
    classes
        .iter()
        .map(|class| Level {
            qubits: class.clone(),
            rels: class.iter().map(|&q| (1.0 + spins[q]) / 2.0).collect(),
        })
        .collect()
}

/// Flip a whole color class per pass instead of one qubit.
///
/// Valid because same-color qubits don't couple, so the order of their flips
/// within a pass is immaterial. The flip count follows the class-size
/// recursion `y_1 = 2m_1`, `y_j = 2m_j + y_{j−1}(m_j+1) − 2m_{j−1}⌈m_j/2⌉`
/// (see [`flip_count_bound`]) — or comes in below it, since coinciding
/// flips from deeper levels cancel too.
pub fn parallel_schedule(
    layout: &PhysicalLayout,
    coloring: &Coloring,
    spins: &[f64],
    tau: f64,
) -> Result<FlipSchedule, ScheduleError> {
    if spins.len() != layout.len() {
        return Err(ScheduleError::SpinCount { got: spins.len(), want: layout.len() });
    }
    check_spins(spins)?;
    let levels = levels_from_classes(coloring.classes(), spins);
    schedule_from_levels(&levels, spins, tau)
}

/// Parallel flipping with the logical sets as the "colors".
///
/// Physical qubits of one set generally *do* couple, so the schedule does
/// not preserve intra-set phases — it doesn't have to, because the logical
/// subspace is insensitive to them. Verify with the inter-set scope.
pub fn grouped_parallel_schedule(
    grouping: &Grouping,
    spins: &[f64],
    tau: f64,
) -> Result<FlipSchedule, ScheduleError> {
    let m: usize = grouping.sets().iter().map(Vec::len).sum();
    if spins.len() != m {
        return Err(ScheduleError::SpinCount { got: spins.len(), want: m });
    }
    let mut classes: Vec<Vec<usize>> = grouping.sets().to_vec();
    classes.sort_by_key(Vec::len);
    let levels = levels_from_classes(&classes, spins);
    schedule_from_levels(&levels, spins, tau)
}

/// Flip count of the parallel construction for ascending class sizes
/// (`y_κ` recursion). An upper bound for the schedules built here.
pub fn flip_count_bound(class_sizes: &[usize]) -> usize {
    let mut sizes = class_sizes.to_vec();
    sizes.sort_unstable();
    let mut y = 0usize;
    let mut prev = 0usize;
    for (j, &m) in sizes.iter().enumerate() {
        y = if j == 0 { 2 * m } else { 2 * m + y * (m + 1) - 2 * prev * m.div_ceil(2) };
        prev = m;
    }
    y
}

// ---------------------------------------------------------------------------
// Verification oracle
// ---------------------------------------------------------------------------

/// Which pairs the oracle holds the schedule accountable for.
#[derive(Debug, Clone, Copy)]
pub enum VerifyScope<'a> {
    /// Every coupled pair must realize `f·s_q·s_r·τ`.
    AllPairs,
    /// Only pairs straddling two sets count; intra-set phases are free.
    InterSetOnly(&'a Grouping),
}

/// Worst phase deviation of the schedule from its target over all `2^m`
/// computational basis states.
///
/// The phase a basis state `z ∈ {±1}^m` accumulates is linear in the pair
/// weights, so the oracle first integrates each pair's signed weight across
/// the event intervals and then scans basis states against
/// `Σ f_qr·s_q·s_r·z_q·z_r·τ`. Exceeding the tolerance is a *finding*, not
/// an error — e.g. grouped schedules legitimately fail the all-pairs scope.
pub fn verify_schedule(
    layout: &PhysicalLayout,
    schedule: &FlipSchedule,
    scope: VerifyScope,
) -> Result<f64, ScheduleError> {
    let m = schedule.num_qubits();
    if m != layout.len() {
        return Err(ScheduleError::SpinCount { got: m, want: layout.len() });
    }
    if m > VERIFY_QUBIT_CAP {
        return Err(ScheduleError::TooManyQubits { got: m, max: VERIFY_QUBIT_CAP });
    }
    let weights = schedule.weight_matrix();
    let spins = schedule.target_spins();
    let tau = schedule.window();

    // Per-pair phase defect coefficients; the basis scan just signs them.
    let mut defects: Vec<(usize, usize, f64)> = Vec::new();
    for (a, b, f) in layout.coupled_pairs() {
        if let VerifyScope::InterSetOnly(grouping) = scope {
            match (grouping.membership(a), grouping.membership(b)) {
                (Some((sa, _)), Some((sb, _))) if sa == sb => continue,
                _ => {}
            }
        }
        let defect = f * (weights[(a, b)] - spins[a] * spins[b]) * tau;
        if defect != 0.0 {
            defects.push((a, b, defect));
        }
    }
    if defects.is_empty() {
        return Ok(0.0);
    }
    let per_state = par::map_indexed(1usize << m, |z| {
        let mut phase = 0.0;
        for &(a, b, d) in &defects {
            let sign = if ((z >> a) ^ (z >> b)) & 1 == 0 { 1.0 } else { -1.0 };
            phase += sign * d;
        }
        phase.abs()
    });
    Ok(per_state.into_iter().fold(0.0f64, f64::max))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_layout(m: usize) -> PhysicalLayout {
        PhysicalLayout::new(
            (0..m).map(|i| [i as f64, 0.0, 0.0]).collect(),
            1.0,
            1.0,
            None,
            1.0,
        )
        .unwrap()
    }

    /// Gray-code parity of qubit `q` in segment `k`.
    fn gray_sign(k: usize, q: usize) -> f64 {
        let gray = k ^ (k >> 1);
        if (gray >> q) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    #[test]
    fn all_ones_is_free_evolution() {
        let s = sequential_schedule(&[1.0, 1.0, 1.0, 1.0], 2.0).unwrap();
        assert!(s.events().is_empty());
        assert_eq!(s.flip_count(), 0);
    }

    #[test]
    fn negative_one_flips_at_boundaries() {
        let s = sequential_schedule(&[-1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(s.flip_count(), 2);
        assert_eq!(s.events().len(), 2);
        assert_eq!(s.events()[0], FlipEvent { fraction: 0.0, qubits: vec![0] });
        assert_eq!(s.events()[1], FlipEvent { fraction: 1.0, qubits: vec![0] });
        let w = s.weight_matrix();
        assert_relative_eq!(w[(0, 1)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(w[(1, 2)], 1.0, epsilon = 1e-12);
    }

    /// The three-qubit schedule must walk the eight Gray-code segments with
    /// durations `τ/8·Π(1+σ·s)`, starting with the all-plus segment.
    #[test]
    fn three_qubit_segments_match_closed_form() {
        let spins = [0.3, -0.7, 0.42];
        let tau = 2.0;
        let s = sequential_schedule(&spins, tau).unwrap();
        assert_eq!(s.flip_count(), 8);
        let intervals = s.parity_intervals();
        assert_eq!(intervals.len(), 8);
        for (k, (df, sigma)) in intervals.iter().enumerate() {
            let want: f64 = (0..3).map(|q| (1.0 + gray_sign(k, q) * spins[q]) / 2.0).product();
            assert_relative_eq!(*df, want, epsilon = 1e-13);
            for q in 0..3 {
                assert_eq!(f64::from(sigma[q]), gray_sign(k, q), "segment {k} qubit {q}");
            }
        }
        // First flip lands at the end of the first segment.
        let t1 = (tau / 8.0) * (1.0 + spins[2]) * (1.0 + spins[1]) * (1.0 + spins[0]);
        assert_relative_eq!(s.events()[0].fraction * tau, t1, epsilon = 1e-13);
        assert_eq!(s.events()[0].qubits, vec![0]);
    }

    /// A spin pinned to +1 collapses half the segments; the published
    /// worked example uses s = (0.5, −0.25, 1).
    #[test]
    fn pinned_spin_example_verifies() {
        let layout = line_layout(3);
        let s = sequential_schedule(&[0.5, -0.25, 1.0], 1.0).unwrap();
        assert!(s.flip_count() < 8);
        let err = verify_schedule(&layout, &s, VerifyScope::AllPairs).unwrap();
        assert!(err < 1e-9, "deviation {err}");
    }

    #[test]
    fn sequential_flip_count_is_two_to_the_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 1..=6 {
            let spins: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.95..0.95)).collect();
            let s = sequential_schedule(&spins, 1.0).unwrap();
            assert_eq!(s.flip_count(), 1 << m, "m = {m}");
            let err = verify_schedule(&line_layout(m), &s, VerifyScope::AllPairs).unwrap();
            assert!(err < 1e-9, "m = {m}, deviation {err}");
        }
    }

    /// Sequential and parallel constructions must realize identical phase
    /// functions on a 2-colorable layout, across many random spin vectors.
    #[test]
    fn sequential_and_parallel_agree() {
        let layout = PhysicalLayout::square_grid(3, 2, 1.0, 1.0, Some(1.0), 1.0);
        let coloring = Coloring::greedy(&layout);
        assert_eq!(coloring.classes().len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for round in 0..200 {
            let spins: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tau = rng.gen_range(0.5..2.0);
            let seq = sequential_schedule(&spins, tau).unwrap();
            let par = parallel_schedule(&layout, &coloring, &spins, tau).unwrap();
            for (schedule, name) in [(&seq, "seq"), (&par, "par")] {
                let err = verify_schedule(&layout, schedule, VerifyScope::AllPairs).unwrap();
                assert!(err < 1e-9, "round {round} {name}: deviation {err}");
            }
            assert!(par.flip_count() <= seq.flip_count());
        }
    }

    /// Checkerboard 2-coloring of a 2×4 nearest-neighbor grid: the flip
    /// count hits (m/2)² + 2m exactly when m/4 is an integer.
    #[test]
    fn two_color_grid_flip_count() {
        let layout = PhysicalLayout::square_grid(4, 2, 1.0, 1.0, Some(1.0), 1.0);
        let coloring = Coloring::greedy(&layout);
        assert_eq!(coloring.class_sizes(), vec![4, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spins: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let s = parallel_schedule(&layout, &coloring, &spins, 1.0).unwrap();
        let m = 8;
        assert_eq!(s.flip_count(), (m / 2) * (m / 2) + 2 * m);
        assert_eq!(flip_count_bound(&coloring.class_sizes()), 32);
        let err = verify_schedule(&layout, &s, VerifyScope::AllPairs).unwrap();
        assert!(err < 1e-9, "deviation {err}");
    }

    /// 2×4 grid with diagonals is 4-colorable with two qubits per color;
    /// the recursion bounds the flips by 108.
    #[test]
    fn four_color_diagonal_grid() {
        let layout = PhysicalLayout::square_grid(4, 2, 1.0, 1.0, Some(std::f64::consts::SQRT_2), 1.0);
        let classes = vec![vec![0, 2], vec![1, 3], vec![4, 6], vec![5, 7]];
        let coloring = Coloring::new(&layout, classes).unwrap();
        assert_eq!(flip_count_bound(&coloring.class_sizes()), 108);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spins: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let s = parallel_schedule(&layout, &coloring, &spins, 1.0).unwrap();
        assert!(s.flip_count() <= 108, "χ = {}", s.flip_count());
        let err = verify_schedule(&layout, &s, VerifyScope::AllPairs).unwrap();
        assert!(err < 1e-9, "deviation {err}");
    }

    #[test]
    fn improper_coloring_is_rejected() {
        let layout = PhysicalLayout::square_grid(2, 1, 1.0, 1.0, Some(1.0), 1.0);
        match Coloring::new(&layout, vec![vec![0, 1]]) {
            Err(ScheduleError::ImproperColoring { .. }) => {}
            other => panic!("expected improper-coloring error, got {other:?}"),
        }
    }

    /// Grouped flipping keeps inter-set phases exact and knowingly gives up
    /// on intra-set ones.
    #[test]
    fn grouped_schedule_inter_set_only() {
        let layout = line_layout(6);
        let grouping = Grouping::new(&layout, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spins: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let s = grouped_parallel_schedule(&grouping, &spins, 1.0).unwrap();
        assert!(s.flip_count() <= flip_count_bound(&[3, 3]));
        let inter = verify_schedule(&layout, &s, VerifyScope::InterSetOnly(&grouping)).unwrap();
        assert!(inter < 1e-9, "inter-set deviation {inter}");
        let all = verify_schedule(&layout, &s, VerifyScope::AllPairs).unwrap();
        assert!(all > 1e-3, "all-pairs deviation unexpectedly small: {all}");
    }

    #[test]
    fn grouped_trivial_cases() {
        let layout = line_layout(4);
        let grouping = Grouping::new(&layout, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let ones = grouped_parallel_schedule(&grouping, &[1.0; 4], 1.0).unwrap();
        assert_eq!(ones.flip_count(), 0);
        let single = Grouping::new(&layout, vec![vec![0, 1, 2, 3]]).unwrap();
        let s = grouped_parallel_schedule(&single, &[0.5, -0.5, 0.25, 0.0], 1.0).unwrap();
        // One set: no inter-set pairs exist, any schedule verifies.
        let err = verify_schedule(&layout, &s, VerifyScope::InterSetOnly(&single)).unwrap();
        assert_eq!(err, 0.0);
    }

    /// Mirroring a schedule in time realizes the same weights — the parity
    /// profile is traversed backwards but every interval keeps its length.
    #[test]
    fn time_reversal_keeps_weights() {
        let spins = [0.6, -0.3, 0.8, -0.9];
        let s = sequential_schedule(&spins, 1.0).unwrap();
        let reversed_raw: Vec<(f64, usize)> = s
            .events()
            .iter()
            .flat_map(|e| e.qubits.iter().map(|&q| (1.0 - e.fraction, q)))
            .collect();
        let reversed = FlipSchedule::from_raw(reversed_raw, spins.to_vec(), 1.0);
        let (w, wr) = (s.weight_matrix(), reversed.weight_matrix());
        for q in 0..4 {
            for r in 0..4 {
                assert_relative_eq!(w[(q, r)], wr[(q, r)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sign_vectors_need_few_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for m in 1..=6 {
            let spins: Vec<f64> =
                (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let s = sequential_schedule(&spins, 1.0).unwrap();
            assert!(s.flip_count() <= 2 * m, "m = {m}, χ = {}", s.flip_count());
        }
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            sequential_schedule(&[1.5], 1.0),
            Err(ScheduleError::SpinOutOfRange { qubit: 0, .. })
        ));
        assert!(matches!(
            sequential_schedule(&[0.5], 0.0),
            Err(ScheduleError::NonPositiveWindow(_))
        ));
        let layout = line_layout(3);
        let s = sequential_schedule(&[0.1, 0.2], 1.0).unwrap();
        assert!(matches!(
            verify_schedule(&layout, &s, VerifyScope::AllPairs),
            Err(ScheduleError::SpinCount { got: 2, want: 3 })
        ));
    }

    #[test]
    fn event_table_lists_all_events() {
        let s = sequential_schedule(&[0.5, -0.5], 1.0).unwrap();
        let table = s.event_table();
        assert!(table.contains("# flips = 4"));
        assert_eq!(table.lines().count(), 3 + s.events().len());
    }
}
