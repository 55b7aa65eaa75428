use std::path::{Path, PathBuf};

use gstein_core::scenario::ContaminationSpec;
use gstein_core::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Partial scenario read from `--config`. Field names follow
/// [`gstein_core::scenario::ScenarioConfig`]; absent fields keep the
/// experiment's defaults. A given `contamination` replaces the table's sweep
/// with that single cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<String>,
    pub model: Option<ModelSpec>,
    pub n: Option<usize>,
    pub contamination: Option<ContaminationSpec>,
    pub gamma_grid: Option<Vec<f64>>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<String>,
}

impl ConfigOverrides {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Some(c) = &cfg.contamination {
            c.validate()?;
        }
        if cfg.replications == Some(0) {
            return Err(CliError::Usage("replications must be at least 1".into()));
        }
        Ok(cfg)
    }
}

/// Settings shared by every experiment run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    pub seed: u64,
    pub out: PathBuf,
    /// Reduced replication counts.
    pub desk: bool,
    /// Overrides the experiment's robust exponent where it has a single one.
    pub gamma: Option<f64>,
    /// Anchor for cross-validation validators.
    pub gamma0: Option<f64>,
    pub overrides: ConfigOverrides,
    /// Write SVG figures.
    pub plots: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 20240601,
            out: PathBuf::from("out"),
            desk: true,
            gamma: None,
            gamma0: None,
            overrides: ConfigOverrides::default(),
            plots: true,
        }
    }
}

impl RunOptions {
    pub fn replications(&self, desk: usize, full: usize) -> usize {
        self.overrides.replications.unwrap_or(if self.desk { desk } else { full })
    }

    pub fn seed(&self) -> u64 {
        self.overrides.seed.unwrap_or(self.seed)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.overrides.output_dir.as_ref().map(PathBuf::from).unwrap_or_else(|| self.out.clone())
    }

    /// Contamination rates to sweep: the configured single cell, or `defaults`.
    pub fn rates(&self, defaults: &[f64]) -> Vec<f64> {
        match &self.overrides.contamination {
            Some(c) => vec![c.rate],
            None => defaults.to_vec(),
        }
    }
}
