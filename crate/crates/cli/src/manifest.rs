//! Run manifests and the per-run output collector.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use parinv::io::{write_csv, write_field, write_json};
use parinv::Grid;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the measured value is not finite.
    pub value: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the normalized config.
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputEntry>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, String> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Every listed output exists with its recorded length.
    pub fn verify(&self, dir: &Path) -> Result<(), String> {
        for o in &self.outputs {
            let path = dir.join(&o.path);
            let len = fs::metadata(&path)
                .map_err(|e| format!("{}: {e}", path.display()))?
                .len();
            if len != o.bytes {
                return Err(format!(
                    "{} has {len} bytes, manifest says {}",
                    o.path, o.bytes
                ));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the files, checks and scalar results of one run.
#[derive(Debug)]
pub struct Run {
    dir: PathBuf,
    files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

impl Run {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            checks: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn track(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(paths);
    }

    pub fn field(&mut self, stem: &str, grid: &Grid, values: &[f64]) -> parinv::Result<()> {
        let written = write_field(&self.dir.join(stem), grid, values)?;
        self.track(written);
        let csv = self.dir.join(format!("{stem}.csv"));
        parinv::io::write_field_csv(&csv, grid, values)?;
        self.track([csv]);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> parinv::Result<()> {
        let path = self.dir.join(name);
        write_csv(&path, header, rows)?;
        self.track([path]);
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.track([path]);
        Ok(())
    }

    pub fn value(&mut self, key: &str, v: impl Into<serde_json::Value>) {
        self.summary.insert(key.into(), v.into());
    }

    /// Records `value <= threshold`.
    pub fn check_below(&mut self, name: &str, value: f64, threshold: f64) {
        let pass = value.is_finite() && value <= threshold;
        self.checks.push(Check {
            name: name.into(),
            value: value.is_finite().then_some(value),
            threshold,
            pass,
        });
    }

    /// Records a boolean outcome as value 1 or 0 against threshold 1.
    pub fn check_true(&mut self, name: &str, ok: bool) {
        self.checks.push(Check {
            name: name.into(),
            value: Some(if ok { 1.0 } else { 0.0 }),
            threshold: 1.0,
            pass: ok,
        });
    }

    /// Writes `summary.json` and the manifest.
    pub fn finish(
        mut self,
        command: &str,
        config_hash: String,
        seed: u64,
        wall_clock_seconds: f64,
    ) -> Result<RunManifest, String> {
        let summary = self.dir.join("summary.json");
        write_json(&summary, &self.summary).map_err(|e| e.to_string())?;
        self.files.push(summary);
        let mut outputs = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let bytes = fs::metadata(f)
                .map_err(|e| format!("{}: {e}", f.display()))?
                .len();
            let rel = f.strip_prefix(&self.dir).unwrap_or(f);
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            outputs.push(OutputEntry { path, bytes });
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        outputs.dedup();
        let passed = self.checks.iter().all(|c| c.pass);
        let manifest = RunManifest {
            command: command.into(),
            config_hash,
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            wall_clock_seconds,
            outputs,
            checks: self.checks,
            passed,
        };
        write_json(&self.dir.join(MANIFEST), &manifest).map_err(|e| e.to_string())?;
        Ok(manifest)
    }
}
