//! Run manifest: enough to reproduce a run, plus digests of what it read and wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Task};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "run.log";

#[derive(Serialize)]
struct FileDigest {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    task: &'static str,
    seed: u64,
    workers: usize,
    /// Effective configuration after command-line overrides.
    config: &'a RunConfig,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[PathBuf]) -> CliResult<Vec<FileDigest>> {
    paths.iter().map(|p| Ok(FileDigest { path: p.clone(), sha256: sha256_file(p)? })).collect()
}

pub fn write(task: Task, cfg: &RunConfig, outputs: &[PathBuf], log: &[String]) -> CliResult<()> {
    let m = Manifest {
        tool: "dichogeo",
        version: env!("CARGO_PKG_VERSION"),
        task: task.name(),
        seed: cfg.seed,
        workers: cfg.workers.unwrap_or(1),
        config: cfg,
        inputs: digests(&cfg.inputs(task))?,
        outputs: digests(outputs)?,
    };
    let path = cfg.output_dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| CliError::io(&path, e))?;
    let log_path = cfg.output_dir.join(LOG_FILE);
    fs::write(&log_path, log.join("\n") + "\n").map_err(|e| CliError::io(&log_path, e))
}
