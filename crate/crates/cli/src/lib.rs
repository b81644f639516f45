//! Batch experiment runner for `parinv`.
//!
//! Each subcommand reads an [`ExperimentConfig`], validates it completely
//! before touching the output directory, runs one pipeline and writes its
//! outputs next to a [`RunManifest`]. Numeric outputs depend only on the
//! config and seed; the wall-clock time lives in the manifest alone.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{Command, ExperimentConfig};
pub use manifest::{Check, OutputEntry, RunManifest};

use manifest::{sha256_hex, Run, MANIFEST};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    /// 1 for validation errors, 2 for solver or I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

/// Exit code of a completed run: 0 when every check passed, 3 otherwise.
pub fn exit_code(manifest: &RunManifest) -> i32 {
    if manifest.passed {
        0
    } else {
        3
    }
}

/// Command-line overrides of the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Solver(e.to_string()))
}

/// Runs one solver subcommand.
pub fn run(
    command: Command,
    mut cfg: ExperimentConfig,
    ov: &Overrides,
) -> Result<RunManifest, CliError> {
    if command == Command::Report {
        let out = ov.out.clone().unwrap_or(cfg.output_dir.clone());
        return report(&out);
    }
    if let Some(c) = cfg.command {
        if c != command {
            return Err(CliError::Validation(format!(
                "config is for {} but {} was requested",
                c.name(),
                command.name()
            )));
        }
    }
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let out = ov.out.clone().unwrap_or(cfg.output_dir.clone());
    let pool = pool(ov.threads)?;
    let pre = commands::Prepared::new(cfg, command).map_err(CliError::Validation)?;

    // the stored config omits the output location so that runs written to
    // different directories hash and compare equal
    let mut normalized = pre.cfg.clone();
    normalized.command = Some(command);
    normalized.output_dir = PathBuf::from(".");
    let text = normalized.to_toml();
    let hash = sha256_hex(text.as_bytes());

    fs::create_dir_all(&out).map_err(|e| CliError::Solver(format!("{}: {e}", out.display())))?;
    let start = Instant::now();
    let mut run = Run::new(&out);
    run.text("config.toml", &text)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    pool.install(|| commands::dispatch(command, &pre, &mut run))
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let seconds = start.elapsed().as_secs_f64();
    run.finish(command.name(), hash, pre.cfg.seed, seconds)
        .map_err(CliError::Solver)
}

/// Collects the manifests of every run directory directly below `out` into
/// `report.csv`, with per-run status in `summary.json`.
pub fn report(out: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let entries =
        fs::read_dir(out).map_err(|e| CliError::Validation(format!("{}: {e}", out.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST).is_file())
        .collect();
    dirs.sort();
    let mut run = Run::new(out);
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for dir in &dirs {
        let name = dir
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let m = RunManifest::read(dir).map_err(CliError::Validation)?;
        let verified = m.verify(dir);
        for c in &m.checks {
            let value = c
                .value
                .map(parinv::io::fmt_f64)
                .unwrap_or_else(|| "nan".into());
            rows.push(format!(
                "{name},{},{},{value},{},{}",
                m.command,
                c.name,
                parinv::io::fmt_f64(c.threshold),
                c.pass
            ));
        }
        run.check_true(&format!("{name}/outputs"), verified.is_ok());
        run.check_true(&format!("{name}/checks"), m.passed);
        runs.push(serde_json::json!({
            "run": name,
            "command": m.command,
            "config_hash": m.config_hash,
            "passed": m.passed,
            "outputs_verified": verified.is_ok(),
        }));
    }
    let mut csv = String::from("run,command,check,value,threshold,pass\n");
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    run.text("report.csv", &csv)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    run.value("runs", serde_json::Value::Array(runs));
    let hash = sha256_hex(csv.as_bytes());
    run.finish("report", hash, 0, start.elapsed().as_secs_f64())
        .map_err(CliError::Solver)
}
