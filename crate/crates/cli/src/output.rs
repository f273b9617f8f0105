//! Result tables and the files written from them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, Format};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Real(f64),
}

impl Cell {
    /// Integers verbatim, reals with 17 significant digits.
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => format!("{x:.16e}"),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

/// One plot panel: a named table with a fixed column set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Panel {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Panel {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Default, Serialize)]
pub struct Outcome {
    pub panels: Vec<Panel>,
    /// Cutoffs, calibration records and other numerical diagnostics.
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
}

impl Outcome {
    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("diagnostics are serializable");
        self.diagnostics.insert(key.to_owned(), v);
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ExperimentConfig,
    version: &'static str,
    threads: usize,
    wall_time_seconds: f64,
    panels: Vec<&'a str>,
    diagnostics: &'a serde_json::Map<String, serde_json::Value>,
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()
}

/// Writes results, per-panel plot data and metadata; returns the files written.
pub fn write_all(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    threads: usize,
    wall_time_seconds: f64,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if cfg.output.formats.contains(&Format::Csv) {
        // Union of panel columns, in order of first appearance.
        let mut columns: Vec<&str> = Vec::new();
        for c in outcome.panels.iter().flat_map(|p| &p.columns) {
            if !columns.contains(c) {
                columns.push(c);
            }
        }
        let header: Vec<&str> = std::iter::once("panel").chain(columns.iter().copied()).collect();
        let rows = outcome.panels.iter().flat_map(|p| {
            let columns = &columns;
            p.rows.iter().map(move |r| {
                let mut out = vec![p.name.clone()];
                out.extend(columns.iter().map(|c| {
                    p.columns
                        .iter()
                        .position(|pc| pc == c)
                        .map(|i| r[i].render())
                        .unwrap_or_default()
                }));
                out
            })
        });
        let path = dir.join("results.csv");
        write_csv(&path, &header, rows)?;
        written.push(path);
        for p in &outcome.panels {
            let path = dir.join(format!("plot_{}.csv", p.name));
            write_csv(&path, &p.columns, p.rows.iter().map(|r| r.iter().map(Cell::render).collect()))?;
            written.push(path);
        }
    }
    if cfg.output.formats.contains(&Format::Json) {
        let path = dir.join("results.json");
        fs::write(&path, serde_json::to_string_pretty(&outcome.panels)?)?;
        written.push(path);
    }
    let meta = Metadata {
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        threads,
        wall_time_seconds,
        panels: outcome.panels.iter().map(|p| p.name.as_str()).collect(),
        diagnostics: &outcome.diagnostics,
    };
    let path = dir.join("metadata.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_keep_seventeen_significant_digits() {
        let x = 0.1 + 0.2;
        let s = Cell::Real(x).render();
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(Cell::Int(12).render(), "12");
    }
}
