use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::args::Format;
use crate::error::Result;

/// One command result in each output format.
pub struct Report {
    pub text: String,
    pub json: serde_json::Value,
    pub csv: String,
}

impl Report {
    pub fn new(text: String, json: &impl Serialize, csv: String) -> Result<Self> {
        Ok(Self { text, json: serde_json::to_value(json)?, csv })
    }

    pub fn render(&self, format: Format) -> Result<String> {
        Ok(match format {
            Format::Text => self.text.clone(),
            Format::Csv => self.csv.clone(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json)?;
                s.push('\n');
                s
            }
        })
    }
}

pub fn format_for_path(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
        Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Text,
    }
}

/// CSV table with a header row. Cells are written with `Display`, so
/// floats keep full round-trip precision.
pub struct Table {
    out: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { out: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, cells: &[&dyn std::fmt::Display]) {
        let line: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(self.out, "{}", line.join(","));
    }

    pub fn finish(self) -> String {
        self.out
    }
}
