//! Deterministic CSV/JSON artifacts.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::CliError;

/// Named output files, written in insertion order.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

/// CSV table with string cells; floats go through [`fmt_f64`].
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Shortest round-trip representation; `inf`/`-inf`/`nan` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        let a = x.abs();
        if a != 0.0 && !(1e-5..1e16).contains(&a) {
            format!("{x:e}")
        } else {
            format!("{x}")
        }
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// JSON number, or the string form for non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::from(fmt_f64(x))
    }
}

impl Artifacts {
    pub fn table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.files.push((name.to_string(), table.to_bytes()?));
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    /// Writes into `dir` and lists the file names, or prints everything.
    pub fn emit(&self, dir: Option<&Path>) -> Result<(), CliError> {
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        match dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                for (name, bytes) in &self.files {
                    std::fs::write(dir.join(name), bytes)?;
                    writeln!(out, "wrote {name}")?;
                }
            }
            None => {
                for (name, bytes) in &self.files {
                    writeln!(out, "# {name}")?;
                    out.write_all(bytes)?;
                }
            }
        }
        Ok(())
    }
}
