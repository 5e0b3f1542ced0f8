//! Experiment configuration read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bernstein::IndexConfig;
use crate::error::{Error, Result};
use crate::malliavin::CylinderFunction;
use crate::shiftspace::ShiftFunction;
use crate::subordinator::ModelSpec;

/// How the survival table behind the weights is obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableMode {
    /// Closed-form survival when the family has one, sampling otherwise.
    #[default]
    Auto,
    Exact,
    Empirical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub shift: Option<ShiftFunction>,
    /// Second shift `g` of the expectation identity; defaults to `shift`.
    #[serde(default)]
    pub g_shift: Option<ShiftFunction>,
    #[serde(default)]
    pub f: Option<CylinderFunction>,
    #[serde(default)]
    pub g: Option<CylinderFunction>,
    /// Observation times for `simulate` when no cylinder function is given.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub table: TableMode,
    /// Draws behind an empirical survival table (default `max(n, 10^5)`).
    #[serde(default)]
    pub tail_n: Option<usize>,
    #[serde(default)]
    pub index: IndexConfig,
    /// Evaluation points for `phi`.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    /// Moment order for `hp-check`.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub kappa1: Option<f64>,
    #[serde(default)]
    pub kappa2: Option<f64>,
    #[serde(default)]
    pub m_max: Option<usize>,
    /// Run `energy` even when its moment/index condition fails.
    #[serde(default)]
    pub override_conditions: bool,
    /// Rerun a failed 3-SE gate once with doubled `n` on fresh streams.
    #[serde(default = "yes")]
    pub retry: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

fn default_n() -> usize {
    100_000
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1000 {
            return Err(Error::Config(format!("field `n` must be at least 1000, got {}", self.n)));
        }
        if let Some(nt) = self.tail_n {
            if nt < 1000 {
                return Err(Error::Config(format!("field `tail_n` must be at least 1000, got {nt}")));
            }
        }
        if !self.kappa.is_finite() {
            return Err(Error::Config("field `kappa` must be finite".into()));
        }
        Ok(())
    }

    pub fn require_shift(&self) -> Result<&ShiftFunction> {
        self.shift.as_ref().ok_or_else(|| Error::Config("missing field `shift`".into()))
    }

    pub fn require_f(&self) -> Result<&CylinderFunction> {
        self.f.as_ref().ok_or_else(|| Error::Config("missing field `f`".into()))
    }
}
