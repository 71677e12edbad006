//! Batch driver: `dichogeo <task> --config <path> [--seed N] [--workers N]`.

pub mod config;
pub mod data;
pub mod error;
pub mod manifest;
pub mod tasks;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{RunConfig, Task};
pub use error::{CliError, CliResult};

pub const DIAGNOSTIC_FILE: &str = "diagnostic.txt";

/// Validates, runs the task on a pool of `workers` threads and writes the
/// manifest and log. Returns the primary output files.
pub fn run(task: Task, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    cfg.validate(task)?;
    let workers = cfg.workers.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    let mut log = tasks::Log::default();
    log.info(format!("dichogeo {} task={} seed={} workers={workers}", env!("CARGO_PKG_VERSION"), task.name(), cfg.seed));
    let outputs = pool.install(|| tasks::run_task(task, cfg, &mut log))?;
    manifest::write(task, cfg, &outputs, &log.lines)?;
    Ok(outputs)
}

/// Records a failure next to the outputs (or in `fallback` when the output
/// directory is unusable).
pub fn write_diagnostic(dir: Option<&Path>, fallback: &Path, task: Task, err: &CliError) -> PathBuf {
    let text = format!("task: {}\nerror: {err}\ndetail: {err:?}\n", task.name());
    if let Some(d) = dir {
        if fs::create_dir_all(d).is_ok() && fs::write(d.join(DIAGNOSTIC_FILE), &text).is_ok() {
            return d.join(DIAGNOSTIC_FILE);
        }
    }
    let p = fallback.join(DIAGNOSTIC_FILE);
    let _ = fs::write(&p, text);
    p
}
