//! Coupling-graph rendering.
//!
//! Produces a Graphviz-compatible text description and a standalone SVG for
//! a weighted logical graph. Both are built from formatted strings with
//! fixed precision, so repeated renders of the same graph are byte-identical.
//! Edge stroke width scales with |weight|; negative weights are dashed.
//! Edges with |weight| ≤ `EDGE_EPSILON` are omitted entirely, so an empty
//! pattern renders as bare vertices.

use std::fmt::Write as _;

/// Weights at or below this draw nothing.
pub const EDGE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Node {
    pub label: String,
    /// Layout position in abstract units; y grows upward.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub name: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl GraphSpec {
    /// Drop sub-threshold edges and order the rest canonically.
    fn drawable_edges(&self) -> Vec<Edge> {
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .copied()
            .filter(|e| e.weight.abs() > EDGE_EPSILON)
            .map(|e| {
                if e.a <= e.b {
                    e
                } else {
                    Edge { a: e.b, b: e.a, weight: e.weight }
                }
            })
            .collect();
        edges.sort_by(|p, q| (p.a, p.b).cmp(&(q.a, q.b)));
        edges
    }

    fn max_abs_weight(&self) -> f64 {
        self.drawable_edges()
            .iter()
            .map(|e| e.weight.abs())
            .fold(0.0, f64::max)
    }

    /// Graphviz `graph` description with pinned positions.
    pub fn to_dot(&self) -> String {
        let edges = self.drawable_edges();
        let wmax = self.max_abs_weight();
        let mut out = String::new();
        writeln!(out, "graph \"{}\" {{", self.name).unwrap();
        writeln!(out, "  node [shape=circle fixedsize=true width=0.4];").unwrap();
        for (i, node) in self.nodes.iter().enumerate() {
            writeln!(
                out,
                "  n{i} [label=\"{}\" pos=\"{:.3},{:.3}!\"];",
                node.label, node.x, node.y
            )
            .unwrap();
        }
        for edge in &edges {
            let width = pen_width(edge.weight, wmax);
            let style = if edge.weight < 0.0 { " style=dashed" } else { "" };
            writeln!(
                out,
                "  n{} -- n{} [penwidth={width:.2}{style} label=\"{:.3}\"];",
                edge.a, edge.b, edge.weight
            )
            .unwrap();
        }
        writeln!(out, "}}").unwrap();
        out
    }

    /// Self-contained SVG. Coordinates are mapped into a fixed-size canvas
    /// with a margin; the mapping (and thus the bytes) depends only on the
    /// node positions and edge weights.
    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 480.0;
        const MARGIN: f64 = 48.0;
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for node in &self.nodes {
            xmin = xmin.min(node.x);
            xmax = xmax.max(node.x);
            ymin = ymin.min(node.y);
            ymax = ymax.max(node.y);
        }
        if self.nodes.is_empty() {
            xmin = 0.0;
            xmax = 1.0;
            ymin = 0.0;
            ymax = 1.0;
        }
        let span = (xmax - xmin).max(ymax - ymin).max(1e-9);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        // center the smaller axis, flip y so "up" in layout is up on screen
        let xoff = MARGIN + 0.5 * ((SIZE - 2.0 * MARGIN) - (xmax - xmin) * scale);
        let yoff = MARGIN + 0.5 * ((SIZE - 2.0 * MARGIN) - (ymax - ymin) * scale);
        let map = |x: f64, y: f64| -> (f64, f64) {
            ((x - xmin) * scale + xoff, (ymax - y) * scale + yoff)
        };

        let edges = self.drawable_edges();
        let wmax = self.max_abs_weight();
        let mut out = String::new();
        writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
             viewBox=\"0 0 {SIZE} {SIZE}\">"
        )
        .unwrap();
        writeln!(out, "  <title>{}</title>", self.name).unwrap();
        writeln!(out, "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
        for edge in &edges {
            let (x1, y1) = map(self.nodes[edge.a].x, self.nodes[edge.a].y);
            let (x2, y2) = map(self.nodes[edge.b].x, self.nodes[edge.b].y);
            let width = 2.0 * pen_width(edge.weight, wmax);
            let dash = if edge.weight < 0.0 { " stroke-dasharray=\"7 4\"" } else { "" };
            writeln!(
                out,
                "  <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
                 stroke=\"#1f3552\" stroke-width=\"{width:.2}\"{dash}/>"
            )
            .unwrap();
        }
        for node in &self.nodes {
            let (cx, cy) = map(node.x, node.y);
            writeln!(
                out,
                "  <circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"14\" fill=\"#f4f6fa\" \
                 stroke=\"#1f3552\" stroke-width=\"1.5\"/>"
            )
            .unwrap();
            writeln!(
                out,
                "  <text x=\"{cx:.2}\" y=\"{cy:.2}\" font-family=\"monospace\" \
                 font-size=\"11\" text-anchor=\"middle\" dominant-baseline=\"central\">{}</text>",
                node.label
            )
            .unwrap();
        }
        writeln!(out, "</svg>").unwrap();
        out
    }
}

/// Stroke width in points: proportional to |w| / wmax, floored so the
/// faintest drawn edge stays visible.
fn pen_width(weight: f64, wmax: f64) -> f64 {
    if wmax <= EDGE_EPSILON {
        return 1.0;
    }
    0.4 + 2.6 * weight.abs() / wmax
}

/// Evenly spaced positions on a unit circle, first node at the top.
pub fn circle_positions(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let theta = std::f64::consts::FRAC_PI_2
                - 2.0 * std::f64::consts::PI * i as f64 / n.max(1) as f64;
            (theta.cos(), theta.sin())
        })
        .collect()
}
