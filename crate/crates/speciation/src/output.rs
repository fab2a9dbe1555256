//! CSV tables with a provenance comment line.
//!
//! Layout:
//!
//! ```text
//! # config_sha256=<hex> config=<json>
//! t,u,H,...
//! 1.00000000e-1,...
//! ```
//!
//! Floats carry 9 significant digits so reruns can be compared as text.

use std::io::{self, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.8e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let j = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Serialize)]
struct Stamp<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
}

/// Canonical JSON of `(command, config)` and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub json: String,
    pub sha256: String,
}

impl Fingerprint {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        let json = serde_json::to_string(&Stamp { command, config }).expect("config serializes");
        let sha256 = hex::encode(Sha256::digest(json.as_bytes()));
        Self { json, sha256 }
    }

    pub fn comment(&self) -> String {
        format!("# config_sha256={} config={}", self.sha256, self.json)
    }
}

pub fn write_csv<W: Write>(mut out: W, fingerprint: &Fingerprint, table: &Table) -> io::Result<()> {
    writeln!(out, "{}", fingerprint.comment())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(Cell::Float(0.1).render(), "1.00000000e-1");
        assert_eq!(
            Cell::Float(std::f64::consts::LN_2).render(),
            "6.93147181e-1"
        );
        assert_eq!(Cell::Float(-12345.678901).render(), "-1.23456789e4");
        assert_eq!(Cell::Float(0.0).render(), "0.00000000e0");
        assert_eq!(Cell::Int(42).render(), "42");
    }

    #[test]
    fn csv_layout() {
        let cfg = ExperimentConfig::from_toml_str(
            "[schedule]\nkind = \"vp\"\n[mixture]\nkind = \"symmetric\"\nd = 4\n",
        )
        .unwrap();
        let fp = Fingerprint::new("profile", &cfg);
        assert_eq!(fp.sha256.len(), 64);
        assert_ne!(fp.sha256, Fingerprint::new("track", &cfg).sha256);
        let mut t = Table::new(vec!["t", "n"]);
        t.push(vec![Cell::Float(0.5), Cell::Int(3)]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &fp, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_sha256="));
        assert_eq!(lines[1], "t,n");
        assert_eq!(lines[2], "5.00000000e-1,3");
    }
}
