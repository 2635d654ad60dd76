//! Line-oriented run reports.
//!
//! Every subcommand produces a `Report`: named sections of `key = value`
//! records in insertion order, so output is stable across runs and easy to
//! diff or grep. Two renderings exist — `records` (machine-oriented, exactly
//! one record per line) and `text` (same data with section banners and
//! aligned keys).

use std::fmt::Display;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Records,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "records" => Ok(Format::Records),
            other => Err(format!("unknown format '{other}' (expected text|records)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start (or continue) the section all subsequent records land in.
    pub fn section(&mut self, name: impl Into<String>) -> &mut Self {
        self.sections.push((name.into(), Vec::new()));
        self
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        if self.sections.is_empty() {
            self.section("report");
        }
        let records = &mut self.sections.last_mut().expect("section exists").1;
        records.push((key.into(), value.to_string()));
        self
    }

    /// Floats are recorded with enough digits to round-trip.
    pub fn put_f64(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.put(key, format!("{value:.12}"))
    }

    pub fn merge(&mut self, other: Report) -> &mut Self {
        self.sections.extend(other.sections);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.sections.iter().all(|(_, records)| records.is_empty())
    }

    /// One `section.key = value` record per line.
    pub fn records(&self) -> String {
        let mut out = String::new();
        for (section, records) in &self.sections {
            for (key, value) in records {
                out.push_str(section);
                out.push('.');
                out.push_str(key);
                out.push_str(" = ");
                out.push_str(value);
                out.push('\n');
            }
        }
        out
    }

    /// Section banners with keys aligned per section.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (section, records) in &self.sections {
            if records.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push('[');
            out.push_str(section);
            out.push_str("]\n");
            let width = records.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            for (key, value) in records {
                out.push_str(&format!("  {key:<width$} = {value}\n"));
            }
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.text(),
            Format::Records => self.records(),
        }
    }

    /// Search the report; used by tests to assert on outcomes.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .filter(|(name, _)| name == section)
            .flat_map(|(_, records)| records.iter())
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}
