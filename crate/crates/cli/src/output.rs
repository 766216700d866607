//! Result tables: CSV data with a JSON metadata sidecar.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub table: String,
    pub columns: Vec<Column>,
    pub rows: usize,
    pub version: String,
    pub seeds: Vec<u64>,
    pub cutoff: usize,
    /// Scalar diagnostics such as series lengths and residuals.
    pub diagnostics: BTreeMap<String, f64>,
    /// Free-form notes, e.g. the meaning of coded columns.
    pub notes: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub cutoff: usize,
    pub diagnostics: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
}

impl ResultTable {
    /// `columns` are `(name, unit)` pairs.
    pub fn new(name: impl Into<String>, columns: &[(&str, &str)], cutoff: usize) -> Self {
        ResultTable {
            name: name.into(),
            columns: columns.iter().map(|(n, u)| Column { name: n.to_string(), unit: u.to_string() }).collect(),
            rows: Vec::new(),
            seeds: Vec::new(),
            cutoff,
            diagnostics: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn diagnostic(&mut self, key: &str, value: f64) {
        self.diagnostics.insert(key.to_string(), value);
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.insert(key.to_string(), value.into());
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn metadata(&self, config: &ExperimentConfig) -> Metadata {
        Metadata {
            table: self.name.clone(),
            columns: self.columns.clone(),
            rows: self.rows.len(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: self.seeds.clone(),
            cutoff: self.cutoff,
            diagnostics: self.diagnostics.clone(),
            notes: self.notes.clone(),
            config: config.clone(),
        }
    }

    /// Writes `<prefix>_<name>.csv` and `<prefix>_<name>.json` and returns
    /// the CSV path.
    pub fn write(&self, dir: &Path, prefix: &str, config: &ExperimentConfig) -> CliResult<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let csv = dir.join(format!("{prefix}_{}.csv", self.name));
        let json = dir.join(format!("{prefix}_{}.json", self.name));
        fs::write(&csv, self.to_csv()).map_err(|e| CliError::Io(format!("{}: {e}", csv.display())))?;
        let meta = serde_json::to_string_pretty(&self.metadata(config)).expect("metadata serializes");
        fs::write(&json, meta + "\n").map_err(|e| CliError::Io(format!("{}: {e}", json.display())))?;
        Ok(csv)
    }
}

/// Parses a CSV written by [`ResultTable::to_csv`].
pub fn read_csv(text: &str) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().ok_or_else(|| CliError::Io("empty csv".into()))?.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Io(format!("csv row {}: {e}", k + 1)))?;
        if row.len() != header.len() {
            return Err(CliError::Io(format!("csv row {} has {} values, expected {}", k + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::from_toml("scenario = \"steady\"\n[params]\nkerr = 1\npump = 2\ngamma = 1\neta = 1\n")
            .unwrap()
    }

    #[test]
    fn csv_round_trips_exactly() {
        let mut t = ResultTable::new("demo", &[("t", "1/eta"), ("x", "")], 10);
        t.push(vec![0.0, 1.0 / 3.0]);
        t.push(vec![1e-300, -f64::MAX]);
        t.push(vec![f64::NAN, 2.5]);
        let (header, rows) = read_csv(&t.to_csv()).unwrap();
        assert_eq!(header, vec!["t", "x"]);
        assert_eq!(rows[0], t.rows[0]);
        assert_eq!(rows[1], t.rows[1]);
        assert!(rows[2][0].is_nan());
    }

    #[test]
    #[should_panic]
    fn ragged_rows_are_refused() {
        let mut t = ResultTable::new("demo", &[("a", "")], 2);
        t.push(vec![1.0, 2.0]);
    }

    #[test]
    fn metadata_round_trips() {
        let mut t = ResultTable::new("demo", &[("a", "")], 12);
        t.seeds = vec![1, 2];
        t.diagnostic("tail_mass", 1e-12);
        t.note("channel", "1 = one-photon");
        let meta = t.metadata(&config());
        let text = serde_json::to_string(&meta).unwrap();
        let back: Metadata = serde_json::from_str(&text).unwrap();
        assert_eq!(back, meta);
    }

    #[test]
    fn write_creates_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = ResultTable::new("demo", &[("a", "")], 2);
        t.push(vec![1.0]);
        let path = t.write(dir.path(), "run", &config()).unwrap();
        assert_eq!(path, dir.path().join("run_demo.csv"));
        assert!(dir.path().join("run_demo.json").exists());
    }
}
