//! Tables, JSON documents and the run manifest.
//!
//! Floats in CSV cells are written in scientific notation with 17 significant
//! digits, which round-trips every `f64`. JSON uses serde_json's shortest
//! round-trip form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(x) => x.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

/// A CSV table with named columns. `notes` become `# ` header comments and
/// carry units and definitions.
pub struct Table {
    pub name: String,
    pub notes: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self { name: name.to_string(), notes: Vec::new(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn note(mut self, line: impl Into<String>) -> Self {
        self.notes.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        for n in &self.notes {
            buf.extend_from_slice(format!("# {n}\n").as_bytes());
        }
        let mut w = csv::Writer::from_writer(buf);
        let io = |e: csv::Error| CliError::Output(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Output(e.to_string()))
    }
}

#[derive(Serialize)]
struct FileEntry {
    file: String,
    bytes: usize,
    sha256: String,
}

/// `sha256` of `bytes`, hex encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the files of one run and writes the manifest last.
pub struct Run {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Run {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(file);
        fs::write(&path, bytes).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        self.files.push(FileEntry { file: file.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn table(&mut self, t: &Table) -> Result<(), CliError> {
        let bytes = t.to_bytes()?;
        self.write(&format!("{}.csv", t.name), &bytes)
    }

    pub fn json(&mut self, file: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.write(file, &bytes)
    }

    /// Writes `manifest.json`. `wall_clock_ms` is the only field that varies
    /// between identical runs.
    pub fn finish(self, subcommand: &str, config_hash: &str, seed: Option<u64>, wall_clock_ms: u128) -> Result<(), CliError> {
        let manifest = serde_json::json!({
            "artifact": "folnerlab",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand,
            "config_hash": config_hash,
            "seed": seed,
            "wall_clock_ms": wall_clock_ms as u64,
            "files": self.files,
        });
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, golden_log()] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    fn golden_log() -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).ln()
    }

    #[test]
    fn tables_carry_notes_and_header() {
        let mut t = Table::new("t", &["n", "x"]).note("x: dimensionless");
        t.push(vec![3usize.into(), 0.5.into()]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "# x: dimensionless\nn,x\n3,5.0000000000000000e-1\n");
    }
}
