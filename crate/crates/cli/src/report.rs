use std::path::{Path, PathBuf};

use clap::ValueEnum;
use podtann_core::artifact::{write_bundle, Block};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Binary,
}

/// Shortest round-trip text, switching to exponent form for very large or small magnitudes.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// A numeric table with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    /// Writes `stem.csv`, or a `stem.json`/`stem.bin` bundle.
    pub fn write(&self, dir: &Path, stem: &str, format: ReportFormat) -> Result<Vec<PathBuf>, CliError> {
        match format {
            ReportFormat::Csv => {
                let path = dir.join(format!("{stem}.csv"));
                let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
                w.write_record(&self.columns).map_err(io)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(|v| fmt_num(*v))).map_err(io)?;
                }
                w.flush().map_err(|e| CliError::Io(e.to_string()))?;
                Ok(vec![path])
            }
            ReportFormat::Binary => {
                let data: Vec<f64> = self.rows.iter().flatten().copied().collect();
                let block = Block::new("table", "-", self.rows.len(), self.columns.len(), data);
                let meta = serde_json::json!({ "columns": self.columns });
                let (json, _) = write_bundle(dir, stem, "report", meta, &[block])?;
                Ok(vec![json.clone(), json.with_extension("bin")])
            }
        }
    }
}
