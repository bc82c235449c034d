//! CSV tables and the JSON run report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Hex SHA-256 of the canonical config echo.
pub fn config_hash(config: &RunConfig) -> String {
    let digest = Sha256::digest(config.to_json().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// A CSV cell. Floats use Rust's shortest round-trip formatting.
pub enum Cell {
    F(f64),
    U(usize),
    B(bool),
    S(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::F(v) => write!(f, "{v}"),
            Cell::U(v) => write!(f, "{v}"),
            Cell::B(v) => write!(f, "{v}"),
            Cell::S(v) => write!(f, "{v}"),
        }
    }
}

pub struct CsvTable {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self { name, header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, hash: &str) -> String {
        let mut out = format!("# config_sha256={hash}\n{}\n", self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportVerdict {
    pub check: String,
    pub subject: String,
    pub asserted: bool,
    pub pass: bool,
    pub statistic: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub config_sha256: String,
    pub config: RunConfig,
    pub verdicts: Vec<ReportVerdict>,
    pub tables: Vec<String>,
    pub timings_seconds: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn asserted_failures(&self) -> Vec<&ReportVerdict> {
        self.verdicts.iter().filter(|v| v.asserted && !v.pass).collect()
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

/// Write the tables and `report.json` into `dir`.
pub fn write_outputs(dir: &Path, report: &mut RunReport, tables: &[CsvTable]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        std::fs::write(&path, t.render(&report.config_sha256)).map_err(|e| io_err(&path, e))?;
        report.tables.push(format!("{}.csv", t.name));
        written.push(path);
    }
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("report serialises");
    std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        let mut t = CsvTable::new("x", &["v"]);
        let vals = [0.1 + 0.2, 1e-300, std::f64::consts::PI, -0.0, 5e-324, 1.7976931348623157e308];
        for &v in &vals {
            t.push(vec![Cell::F(v)]);
        }
        let text = t.render("h");
        let parsed: Vec<f64> = text.lines().skip(2).map(|l| l.parse().unwrap()).collect();
        for (a, b) in vals.iter().zip(&parsed) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
