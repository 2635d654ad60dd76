//! Bundled scenario files, compiled into the binary so `run-all` and the
//! name-based subcommands work without any files on disk.

use crate::scenario::{ConfigError, Scenario};

/// `(name, TOML source)` for every bundled scenario, in a stable order.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig4-g1", include_str!("../fixtures/fig4-g1.toml")),
    ("fig4-g2", include_str!("../fixtures/fig4-g2.toml")),
    ("alg-g1", include_str!("../fixtures/alg-g1.toml")),
    ("alg-g2", include_str!("../fixtures/alg-g2.toml")),
    ("fig5-cube", include_str!("../fixtures/fig5-cube.toml")),
    (
        "fig5-cube-published",
        include_str!("../fixtures/fig5-cube-published.toml"),
    ),
    ("fig5-nn9", include_str!("../fixtures/fig5-nn9.toml")),
    ("fig6a-hex", include_str!("../fixtures/fig6a-hex.toml")),
    ("fig6b-triangular", include_str!("../fixtures/fig6b-triangular.toml")),
    ("fig8a-pentomino", include_str!("../fixtures/fig8a-pentomino.toml")),
    ("fig8b-nn4", include_str!("../fixtures/fig8b-nn4.toml")),
    ("fig8c-nn5", include_str!("../fixtures/fig8c-nn5.toml")),
    ("fig13-brick", include_str!("../fixtures/fig13-brick.toml")),
    ("appd-n8", include_str!("../fixtures/appd-n8.toml")),
    ("fig10-ghz", include_str!("../fixtures/fig10-ghz.toml")),
];

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|&(_, s)| s)
}

pub fn load(name: &str) -> Option<Result<Scenario, ConfigError>> {
    source(name).map(Scenario::parse)
}

/// Resolve a fixture reference that may address a single case with a
/// `-<case>` suffix, e.g. `fig4-g2-row-g` → (`fig4-g2` scenario, case
/// `row-g`). Longest scenario-name match wins, so scenario names that are
/// prefixes of each other stay unambiguous.
pub fn resolve(reference: &str) -> Option<(Scenario, Option<String>)> {
    if let Some(src) = source(reference) {
        return Some((Scenario::parse(src).ok()?, None));
    }
    let mut best: Option<(&str, &str)> = None;
    for &(name, src) in BUNDLED {
        if reference.len() > name.len() + 1
            && reference.starts_with(name)
            && reference.as_bytes()[name.len()] == b'-'
            && best.map_or(true, |(b, _)| name.len() > b.len())
        {
            best = Some((name, src));
        }
    }
    let (name, src) = best?;
    let scenario = Scenario::parse(src).ok()?;
    let case = reference[name.len() + 1..].to_string();
    scenario.case(&case)?;
    Some((scenario, Some(case)))
}
