//! Config-driven experiment runner.
//!
//! [`run`] validates the config, looks the mode up in a [`Registry`], runs
//! it into `config.out` and finishes with `manifest.json`. Apart from the
//! timing fields of the manifest every output byte is a function of the
//! config.

mod config;
mod modes;
mod registry;

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, Overrides};
pub use modes::{table1_suite, table_cells, GRADTABLE_HEADER, TABLE1_H, TABLE1_P, THEOREM_PREFACTOR};
pub use registry::{Experiment, Outcome, Registry};

use crate::error::Result;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub library_version: String,
    pub mode: String,
    pub config: ExperimentConfig,
    pub measured_coherence: Option<f64>,
    /// `null` when the dictionary is orthogonal.
    pub measured_xi: Option<f64>,
    pub artifacts: Vec<String>,
    pub summary: serde_json::Value,
    pub started_unix: f64,
    pub wall_seconds: f64,
}

pub fn run(config: &ExperimentConfig) -> Result<Manifest> {
    run_with(&Registry::builtin(), config)
}

pub fn run_with(registry: &Registry, config: &ExperimentConfig) -> Result<Manifest> {
    let mode = registry.get(&config.mode)?;
    config.validate()?;
    std::fs::create_dir_all(&config.out)?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let outcome = mode.run(config)?;
    let (coherence, xi) = outcome.measured.unzip();
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: mode.name().to_string(),
        config: config.clone(),
        measured_coherence: coherence,
        measured_xi: xi.filter(|x| x.is_finite()),
        artifacts: outcome.artifacts.iter().map(|p| p.display().to_string()).collect(),
        summary: outcome.summary,
        started_unix,
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(config.out.join("manifest.json"), text)?;
    Ok(manifest)
}

/// One-line JSON error record for scripts: `{"error":kind,"code":n,"message":..}`.
pub fn error_line(err: &crate::Error) -> String {
    serde_json::json!({ "error": err.kind(), "code": err.exit_code(), "message": err.to_string() }).to_string()
}
