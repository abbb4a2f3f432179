//! Experiment runner for the `matchsim` command.

pub mod config;
pub mod experiments;

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use config::{validate_config, ExperimentConfig, Kind};

/// Version string baked in at build time (`git describe` when available).
pub const VERSION: &str = env!("MATCHSIM_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] matchsim::Error),
    #[error("failed to encode summary: {0}")]
    Json(#[from] serde_json::Error),
}

/// Short SHA-256 of the canonical config echo. The output directory is not
/// part of the hash.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))[..12].to_string()
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub summary: Value,
    pub summary_path: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Runs one experiment, writing its data files and summary JSON into
/// `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    fs::create_dir_all(&cfg.out)?;
    let hash = config_hash(cfg);
    let started = Instant::now();
    let mut out = experiments::Outputs {
        dir: &cfg.out,
        kind: cfg.kind,
        hash: &hash,
        written: Vec::new(),
    };
    let results = experiments::dispatch(cfg, &mut out)?;
    let summary = json!({
        "kind": cfg.kind,
        "config": cfg,
        "config_hash": hash,
        "rng": matchsim::rng::RNG_NAME,
        "version": VERSION,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "results": results,
        "files": out.written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let summary_path = out.path("summary", "json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    let files = out.written;
    Ok(RunSummary {
        summary,
        summary_path,
        files,
    })
}
