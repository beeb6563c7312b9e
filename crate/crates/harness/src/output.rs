//! CSV tables with a fixed header and the JSON run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Rows of string cells under a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[&'static str] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// Panics on a width mismatch, which is a programming error.
    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| HarnessError::io("csv buffer", e.into_error()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Reads a CSV file and checks that its header is exactly `expected`.
pub fn read_checked(path: &Path, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let text = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_slice());
    let header = r.headers()?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(HarnessError::Schema {
            file: path.display().to_string(),
            message: format!(
                "header {:?}, expected {:?}",
                header.iter().collect::<Vec<_>>(),
                expected
            ),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(HarnessError::Schema {
                file: path.display().to_string(),
                message: format!("row with {} fields", rec.len()),
            });
        }
        rows.push(rec);
    }
    Ok(rows)
}

/// Collects output files and run parameters, then writes `manifest.json`.
#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    command: String,
    params: Vec<(String, Value)>,
    files: Vec<Value>,
    notes: Vec<String>,
}

impl RunOutput {
    pub fn create(dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(RunOutput {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            params: Vec::new(),
            files: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.params.push((key.to_string(), value.into()));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        let bytes = table.to_bytes()?;
        let path = self.write_bytes(name, &bytes)?;
        if let Some(last) = self.files.last_mut() {
            last["rows"] = json!(table.rows().len());
            last["columns"] = json!(table.header());
        }
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.files
            .push(json!({ "file": name, "sha256": sha256_hex(bytes) }));
        Ok(path)
    }

    /// Writes the manifest. It holds no timestamps, so identical runs give
    /// identical manifests.
    pub fn finish(self) -> Result<PathBuf> {
        let params: serde_json::Map<String, Value> = self.params.into_iter().collect();
        let manifest = json!({
            "tool": "choicelab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "parameters": params,
            "outputs": self.files,
            "notes": self.notes,
        });
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest is valid JSON");
        fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }
}

/// `(file, sha256)` for every output recorded in a manifest.
pub fn manifest_checksums(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| HarnessError::Schema {
        file: path.display().to_string(),
        message: e.to_string(),
    })?;
    let outputs = v["outputs"]
        .as_array()
        .ok_or_else(|| HarnessError::Schema {
            file: path.display().to_string(),
            message: "missing outputs".into(),
        })?;
    Ok(outputs
        .iter()
        .filter_map(|o| {
            Some((
                o["file"].as_str()?.to_string(),
                o["sha256"].as_str()?.to_string(),
            ))
        })
        .collect())
}
