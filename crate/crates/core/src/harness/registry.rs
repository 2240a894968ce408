use std::path::PathBuf;

use super::config::ExperimentConfig;
use super::modes;
use crate::error::{Error, Result};

/// What a mode leaves behind besides its files.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// File names written into the output directory.
    pub artifacts: Vec<PathBuf>,
    /// Measured `(coherence, xi)` of the dictionary the mode used, if any.
    pub measured: Option<(f64, f64)>,
    /// Short machine-readable digest copied into the manifest.
    pub summary: serde_json::Value,
}

/// One runnable experiment, looked up by name at run time.
pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    fn about(&self) -> &'static str;

    /// Runs with a validated config, writing into `cfg.out` (which exists).
    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome>;
}

pub struct Registry {
    entries: Vec<Box<dyn Experiment>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Every mode shipped with the library.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(modes::Gen));
        r.register(Box::new(modes::Support));
        r.register(Box::new(modes::GradTable));
        r.register(Box::new(modes::Scan));
        r.register(Box::new(modes::Decompose));
        r.register(Box::new(modes::Mismatch));
        r.register(Box::new(modes::GradCheck));
        r.register(Box::new(modes::Table1));
        r
    }

    /// Adds a mode, replacing any earlier one with the same name.
    pub fn register(&mut self, exp: Box<dyn Experiment>) {
        self.entries.retain(|e| e.name() != exp.name());
        self.entries.push(exp);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Experiment> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::UnknownMode(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn describe(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.iter().map(|e| (e.name(), e.about())).collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}
