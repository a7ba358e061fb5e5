//! Rendering of command results. CSV files start with `#` lines holding the resolved
//! configuration; JSON files wrap the result as {"config", "result"}. Nothing
//! time-dependent is written, so identical runs give identical bytes.

use crate::args::Format;
use crate::error::{CliError, CliResult};
use serde_json::Value;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Shortest round-trip form; scientific outside [1e-4, 1e15).
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub result: Value,
    pub table: Option<Table>,
    pub default_format: Format,
    /// Failed verification checks; nonzero turns into exit status 3 after writing.
    pub failures: usize,
}

impl Artifact {
    pub fn json(result: Value) -> Self {
        Self { result, table: None, default_format: Format::Json, failures: 0 }
    }

    pub fn tabular(result: Value, table: Table) -> Self {
        Self { result, table: Some(table), default_format: Format::Csv, failures: 0 }
    }
}

/// One-row table from the scalar members of a JSON object.
fn flatten(v: &Value) -> Table {
    let mut t = Table::default();
    let mut row = vec![];
    if let Value::Object(m) = v {
        for (k, x) in m {
            let cell = match x {
                Value::Number(n) => n.to_string(),
                Value::String(s) => s.clone(),
                Value::Bool(b) => b.to_string(),
                _ => continue,
            };
            t.header.push(k.clone());
            row.push(cell);
        }
    }
    t.rows.push(row);
    t
}

pub fn render(a: &Artifact, format: Format, config: &Value) -> CliResult<Vec<u8>> {
    match format {
        Format::Json => {
            let doc = serde_json::json!({ "config": config, "result": a.result });
            let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Usage(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut out = format!("# kfp {}\n# config: {}\n", env!("CARGO_PKG_VERSION"), config).into_bytes();
            let flat;
            let table = match &a.table {
                Some(t) => t,
                None => {
                    flat = flatten(&a.result);
                    &flat
                }
            };
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&table.header).map_err(csv_err)?;
            for r in &table.rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush()?;
            drop(w);
            Ok(out)
        }
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

pub fn write(bytes: &[u8], out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, bytes)?;
        }
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}
