//! Scenario files: the TOML schema, parsing with preset expansion, and the
//! canonical serialized form.
//!
//! A scenario names a physical layout, how its qubits are grouped into
//! logical sets, and a list of cases to check or compute. Named presets
//! (groupings, target topologies, class geometries) are expanded to explicit
//! data at load time, and the expanded form is what serializes back — a
//! stored file remains auditable without this binary. Serialization is
//! deterministic, so `serialize(parse(s))` is a fixed point once `s` is in
//! canonical form.
//!
//! All duration- and length-like keys carry their unit in the name:
//! positions and cutoffs are in units of the lattice spacing δ, times in
//! units of δ/J.

use crate::presets;
use loqsim::lattice::LatticeError;
use loqsim::{Grouping, PhysicalLayout};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A problem the CLI can load and act on.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Geometry reverse-engineered from a figure rather than stated in the
    /// source; such fixtures use looser tolerance tiers.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reconstructed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<GroupingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<ClassesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compiler: Option<CompilerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunOptions>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<Case>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// Logical-subspace vectors realizing a coupling pattern on a grouping.
    Pattern,
    /// Constructive fixed-target runs reproduced with pinned choices.
    Algorithm,
    /// Periodic constructions checked through their bond-class strengths.
    Classes,
    /// All-to-all connectivity constructions (block counts, qubit counts).
    Scaling,
    /// Pulse-program compilation on one logical set.
    Compiler,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Pattern => "pattern",
            Kind::Algorithm => "algorithm",
            Kind::Classes => "classes",
            Kind::Scaling => "scaling",
            Kind::Compiler => "compiler",
        })
    }
}

/// Physical qubit positions and the coupling law between them.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    /// Grid width/height for rectangular layouts; omitted when `positions`
    /// is given explicitly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    /// Explicit positions in units of δ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 3]>>,
    #[serde(default = "one")]
    pub coupling_j: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    /// Interaction range in units of δ; omitted = unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_delta: Option<f64>,
    #[serde(default = "one")]
    pub spacing_delta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupingSpec {
    /// Preset this grouping came from, kept for auditability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Explicit per-set qubit indices (slot order significant). Filled in
    /// from the preset when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassesSpec {
    /// Canonical geometry name (`hexagonal`, `triangular`, `pentomino`);
    /// figure aliases are accepted and canonicalized at load.
    pub geometry: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub num_logical: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_qubits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_blocks: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompilerSpec {
    /// Which logical set to compile on.
    pub set: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prep_time_over_delta_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hadamard_time_over_delta_j: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Flip-schedule window τ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_over_delta_j: Option<f64>,
    /// Simulated or compared evolution time T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_over_delta_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trotter_slices: Option<usize>,
    /// Decoupling alternation count k for cost comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternations: Option<u64>,
    /// Lattice side ℓ for rearrangement costs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer_starts: Option<usize>,
}

/// How a case's pinned data is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Recompute couplings (or class strengths) from pinned vectors and
    /// compare against the expected pattern.
    #[default]
    Realize,
    /// Re-run the constructive solver with the published components as
    /// pinned step choices, then compare outcome to the published row.
    PinnedSolve,
    /// Search for the best scale on the case's pattern and require a floor.
    Optimize,
    /// Compute and report, but never fail: data retained for provenance.
    ReportOnly,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Realize => "realize",
            Protocol::PinnedSolve => "pinned-solve",
            Protocol::Optimize => "optimize",
            Protocol::ReportOnly => "report-only",
        })
    }
}

/// One checkable unit of a scenario. Which fields apply depends on the
/// scenario kind and the protocol; validation rejects inapplicable
/// combinations up front.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub name: String,
    #[serde(default, skip_serializing_if = "is_default_protocol")]
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Pinned per-set subspace vectors (or published components for
    /// pinned-solve).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<Vec<f64>>>,
    /// Topology preset name, expanded into `edges` at load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    /// Target topology as `(i, j, relative weight)`; unlisted pairs are
    /// structural zeros.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    /// Expected common scale: edge (i, j) should realize `lambda·w_ij`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Scale as printed in the source, when it differs from the frozen
    /// full-precision value; reported, not checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_published: Option<f64>,
    /// Per-edge deviation bound, relative to the pattern scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_tolerance: Option<f64>,
    /// Bound on structural-zero couplings, relative to the pattern scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tolerance: Option<f64>,
    /// Absolute bound on the re-solved scale vs `lambda` (pinned-solve).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_tolerance: Option<f64>,
    /// Bound on re-solved components vs the published ones (pinned-solve).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component_tolerance: Option<f64>,
    /// Required minimum scale (optimize).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_floor: Option<f64>,
    /// Expected per-class strengths (classes scenarios).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    /// Per-class ratio coefficients (classes optimize).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    /// Absolute tolerance for class-strength targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn is_default_protocol(p: &Protocol) -> bool {
    *p == Protocol::Realize
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown grouping preset '{0}'")]
    UnknownGroupingPreset(String),
    #[error("unknown pattern preset '{0}' in case '{1}'")]
    UnknownPatternPreset(String, String),
    #[error("unknown class geometry '{0}'")]
    UnknownGeometry(String),
    #[error("{0}")]
    Invalid(String),
    #[error("layout error: {0}")]
    Lattice(#[from] LatticeError),
}

impl Scenario {
    /// Parse a scenario, expand its presets, and validate it.
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let mut scenario: Scenario = toml::from_str(source)?;
        scenario.canonicalize()?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Canonical serialized form (stable field order, expanded presets).
    pub fn serialize(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Expand presets into explicit data in place.
    pub fn canonicalize(&mut self) -> Result<(), ConfigError> {
        if let Some(grouping) = &mut self.grouping {
            if grouping.sets.is_none() {
                let preset = grouping.preset.clone().ok_or_else(|| {
                    ConfigError::Invalid("grouping needs sets or a preset".into())
                })?;
                let (w, h, sets) = presets::grouping_sets(&preset)
                    .ok_or(ConfigError::UnknownGroupingPreset(preset))?;
                grouping.sets = Some(sets);
                // a preset implies its canonical lattice when none is given
                if self.layout.is_none() {
                    self.layout = Some(LayoutSpec {
                        width: Some(w),
                        height: Some(h),
                        positions: None,
                        coupling_j: 1.0,
                        alpha: 1.0,
                        cutoff_delta: None,
                        spacing_delta: 1.0,
                    });
                }
            }
        }
        if let Some(classes) = &mut self.classes {
            let canonical = match classes.geometry.as_str() {
                "fig6a" => "hexagonal",
                "fig6b" => "triangular",
                "fig8a" => "pentomino",
                other => other,
            };
            if presets::class_geometry(canonical).is_none() {
                return Err(ConfigError::UnknownGeometry(classes.geometry.clone()));
            }
            classes.geometry = canonical.to_string();
        }
        for case in &mut self.cases {
            if case.edges.is_none() {
                if let Some(pattern) = &case.pattern {
                    let edges = presets::pattern_edges(pattern).ok_or_else(|| {
                        ConfigError::UnknownPatternPreset(pattern.clone(), case.name.clone())
                    })?;
                    case.edges = Some(edges);
                }
            }
        }
        Ok(())
    }

    /// Structural checks beyond what the schema can express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.name.is_empty() {
            return fail("scenario name must not be empty".into());
        }
        match self.kind {
            Kind::Pattern | Kind::Algorithm | Kind::Compiler => {
                if self.layout.is_none() || self.grouping.is_none() {
                    return fail(format!("kind {} needs [layout] and [grouping]", self.kind));
                }
                // materializing checks dims, overlaps, slot consistency
                let (layout, grouping) = self.build_layout_and_grouping()?;
                if self.kind == Kind::Compiler {
                    let spec = self.compiler.as_ref().ok_or_else(|| {
                        ConfigError::Invalid("compiler scenario needs [compiler]".into())
                    })?;
                    if spec.set >= grouping.num_sets() {
                        return fail(format!(
                            "compiler set {} out of range ({} sets)",
                            spec.set,
                            grouping.num_sets()
                        ));
                    }
                }
                drop(layout);
            }
            Kind::Classes => {
                if self.classes.is_none() {
                    return fail("classes scenario needs [classes]".into());
                }
            }
            Kind::Scaling => {
                if self.scaling.is_none() {
                    return fail("scaling scenario needs [scaling]".into());
                }
            }
        }
        for case in &self.cases {
            self.validate_case(case)?;
        }
        Ok(())
    }

    fn validate_case(&self, case: &Case) -> Result<(), ConfigError> {
        let fail = |msg: String| {
            Err(ConfigError::Invalid(format!("case '{}': {msg}", case.name)))
        };
        match self.kind {
            Kind::Pattern | Kind::Algorithm => {
                if case.edges.is_none() {
                    return fail("needs edges or a pattern preset".into());
                }
                match case.protocol {
                    Protocol::Realize | Protocol::ReportOnly => {
                        if case.vectors.is_none() {
                            return fail("realize protocol needs pinned vectors".into());
                        }
                    }
                    Protocol::PinnedSolve => {
                        if case.vectors.is_none() || case.lambda.is_none() {
                            return fail(
                                "pinned-solve needs published vectors and lambda".into()
                            );
                        }
                    }
                    Protocol::Optimize => {}
                }
            }
            Kind::Classes => match case.protocol {
                Protocol::Optimize => {
                    if case.coefficients.is_none() {
                        return fail("classes optimize needs coefficients".into());
                    }
                }
                _ => {
                    if case.vectors.is_none() || case.targets.is_none() {
                        return fail("classes case needs vectors and targets".into());
                    }
                }
            },
            Kind::Scaling | Kind::Compiler => {}
        }
        if let Some(edges) = &case.edges {
            let n = self.num_sets().unwrap_or(0);
            for &(i, j, _) in edges {
                if i >= j || j >= n {
                    return fail(format!("edge ({i}, {j}) is not a canonical pair of {n} sets"));
                }
            }
        }
        Ok(())
    }

    pub fn num_sets(&self) -> Option<usize> {
        self.grouping.as_ref().and_then(|g| g.sets.as_ref()).map(Vec::len)
    }

    /// Materialize the physical layout.
    pub fn build_layout(&self) -> Result<PhysicalLayout, ConfigError> {
        let spec = self
            .layout
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("scenario has no [layout]".into()))?;
        if let Some(positions) = &spec.positions {
            return Ok(PhysicalLayout::new(
                positions.clone(),
                spec.coupling_j,
                spec.alpha,
                spec.cutoff_delta,
                spec.spacing_delta,
            )?);
        }
        match (spec.width, spec.height) {
            (Some(w), Some(h)) if w * h > 0 => Ok(PhysicalLayout::square_grid(
                w,
                h,
                spec.coupling_j,
                spec.alpha,
                spec.cutoff_delta,
                spec.spacing_delta,
            )),
            _ => Err(ConfigError::Invalid(
                "[layout] needs positions or positive width and height".into(),
            )),
        }
    }

    /// Materialize the layout together with the grouping it carries.
    pub fn build_layout_and_grouping(
        &self,
    ) -> Result<(PhysicalLayout, Grouping), ConfigError> {
        let layout = self.build_layout()?;
        let sets = self
            .grouping
            .as_ref()
            .and_then(|g| g.sets.clone())
            .ok_or_else(|| ConfigError::Invalid("scenario has no [grouping]".into()))?;
        let grouping = Grouping::new(&layout, sets)?;
        Ok((layout, grouping))
    }

    /// Case lookup used by the `--case` flag.
    pub fn case(&self, name: &str) -> Option<&Case> {
        self.cases.iter().find(|c| c.name == name)
    }
}
