use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::support::default_nu_sq;
use crate::synth::CodeModel;

/// Everything a run needs. Missing keys in a JSON file take the defaults
/// below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub h: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    /// Defaults to `p + 0.01`.
    pub nu_sq: Option<f64>,
    /// Bias prefactor. Defaults to the mode's own choice (2 for the
    /// theorem-side modes, 0.3 for the landscape experiments).
    pub prefactor: Option<f64>,
    pub samples: usize,
    pub points: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub mode: String,
    /// `decompose` only: also enumerate supports for the exact proxy and
    /// report the reconstruction residual. Refused above the enumeration
    /// limit.
    pub exact: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 100,
            h: 256,
            p: 0.01,
            a: 1.0,
            b: 10.0,
            nu_sq: None,
            prefactor: None,
            samples: 5000,
            points: 200,
            seed: 0,
            out: PathBuf::from("out"),
            mode: "gen".to_string(),
            exact: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn nu_sq(&self) -> f64 {
        self.nu_sq.unwrap_or_else(|| default_nu_sq(self.p))
    }

    pub fn prefactor_or(&self, fallback: f64) -> f64 {
        self.prefactor.unwrap_or(fallback)
    }

    pub fn model(&self) -> Result<CodeModel> {
        CodeModel::uniform(self.h, self.p, self.a, self.b)
    }

    /// Range checks shared by every mode. Mode names are checked by the
    /// registry.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        if self.h < self.n {
            return Err(invalid(format!("need h >= n, got n={}, h={}", self.n, self.h)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(invalid(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.a > 0.0 && self.b >= self.a && self.b.is_finite()) {
            return Err(invalid(format!("need 0 < a <= b, got a={}, b={}", self.a, self.b)));
        }
        if !(self.nu_sq() > 0.0) {
            return Err(invalid("nu_sq must be positive"));
        }
        if let Some(pf) = self.prefactor {
            if !(pf > 0.0 && pf.is_finite()) {
                return Err(invalid("prefactor must be positive"));
            }
        }
        if self.samples == 0 || self.points == 0 {
            return Err(invalid("samples and points must be positive"));
        }
        Ok(())
    }
}

/// Command-line values that replace the corresponding config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<usize>,
    pub h: Option<usize>,
    pub p: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub nu_sq: Option<f64>,
    pub prefactor: Option<f64>,
    pub samples: Option<usize>,
    pub points: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<String>,
    pub exact: Option<bool>,
}

impl Overrides {
    pub fn apply(self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        take!(n, h, p, a, b, samples, points, seed, out, mode, exact);
        if self.nu_sq.is_some() {
            cfg.nu_sq = self.nu_sq;
        }
        if self.prefactor.is_some() {
            cfg.prefactor = self.prefactor;
        }
        cfg
    }
}
