//! Experiment orchestration behind the `gridcascade` CLI.
//!
//! Commands compute their tables in memory; [`emit`] then writes one file per
//! table plus a `<command>_manifest.json`. Given the same configuration every
//! table file is byte-identical across runs and thread counts.

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

pub use commands::CommandOutput;
pub use output::{OutputFormat, RunManifest, Table};

use crate::error::{Error, Result};

/// Writes every table of `out` to `dir`, then the manifest. Returns the
/// paths in write order, manifest last.
pub fn emit(out: &CommandOutput, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(out.tables.len() + 1);
    for t in &out.tables {
        paths.push(t.write(dir, format)?);
    }
    let names = paths
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = RunManifest::new(out.command, out.config.clone(), names, out.summary.clone());
    paths.push(manifest.write(dir)?);
    Ok(paths)
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}
