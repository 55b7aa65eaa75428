//! Drivers for the simulation tables. Each driver fans replications out over
//! the rayon pool with counter-based generators, so results do not depend on
//! scheduling, then writes per-replication and aggregated CSV, a text table,
//! optional SVG plots and a manifest.

pub mod cv;
pub mod nmm;
pub mod power;
pub mod quartic;
pub mod svgd;
pub mod verify;
pub mod vmf;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunOptions;
use crate::error::CliResult;
use crate::output::{write_manifest, ResolvedConfig, RunManifest};

/// Share of failed replications in any table cell above which the run fails.
pub const FAILURE_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VmfTable1,
    CvTable2,
    NmmTable3,
    QuarticTable4,
    PowerTable5,
    SvgdTable6,
    VerifyIdentities,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::VmfTable1 => "vmf-table1",
            Experiment::CvTable2 => "cv-table2",
            Experiment::NmmTable3 => "nmm-table3",
            Experiment::QuarticTable4 => "quartic-table4",
            Experiment::PowerTable5 => "power-table5",
            Experiment::SvgdTable6 => "svgd-table6",
            Experiment::VerifyIdentities => "verify-identities",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub files: Vec<PathBuf>,
    pub replications: usize,
    pub failures: usize,
    /// Largest failed share over table cells.
    pub worst_failure_share: f64,
    pub text: String,
    pub elapsed_seconds: f64,
    /// Only set by the verification suite.
    pub verified: Option<bool>,
}

impl ExperimentReport {
    pub fn threshold_exceeded(&self) -> bool {
        self.worst_failure_share > FAILURE_THRESHOLD
    }
}

pub fn run_experiment(exp: Experiment, opts: &RunOptions) -> CliResult<ExperimentReport> {
    Ok(match exp {
        Experiment::VmfTable1 => vmf::run(opts)?.1,
        Experiment::CvTable2 => cv::run(opts)?.1,
        Experiment::NmmTable3 => nmm::run(opts)?.1,
        Experiment::QuarticTable4 => quartic::run(opts)?.1,
        Experiment::PowerTable5 => power::run(opts)?.1,
        Experiment::SvgdTable6 => svgd::run(opts)?.1,
        Experiment::VerifyIdentities => verify::run(opts)?.1,
    })
}

/// Bookkeeping shared by the drivers.
pub(crate) struct Run<'a> {
    pub name: &'static str,
    pub opts: &'a RunOptions,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    start: Instant,
}

impl<'a> Run<'a> {
    pub fn new(exp: Experiment, opts: &'a RunOptions) -> CliResult<Self> {
        let dir = opts.out_dir().join(exp.name());
        std::fs::create_dir_all(&dir)?;
        Ok(Self { name: exp.name(), opts, dir, files: Vec::new(), start: Instant::now() })
    }

    pub fn stem(&self) -> String {
        self.name.replace('-', "_")
    }

    pub fn write(&mut self, file: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(file);
        std::fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    pub fn plot(&mut self, file: &str, svg: impl FnOnce() -> String) -> CliResult<()> {
        if self.opts.plots {
            self.write(file, &svg())?;
        }
        Ok(())
    }

    pub fn finish(
        mut self,
        text: String,
        settings: impl Serialize,
        replications: usize,
        failures: usize,
        worst_failure_share: f64,
    ) -> CliResult<ExperimentReport> {
        self.write(&format!("{}_table.txt", self.stem()), &text)?;
        let manifest_path = self.dir.join("manifest.json");
        self.files.push(manifest_path.clone());
        let elapsed = self.start.elapsed().as_secs_f64();
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: self.name.to_string(),
            config: ResolvedConfig {
                desk: self.opts.desk,
                gamma: self.opts.gamma,
                gamma0: self.opts.gamma0,
                overrides: self.opts.overrides.clone(),
                settings: serde_json::to_value(settings)?,
            },
            seed: self.opts.seed(),
            wall_time_seconds: elapsed,
            replications,
            failures,
            files: self.files.iter().map(|p| display(p)).collect(),
        };
        write_manifest(&manifest_path, &manifest)?;
        Ok(ExperimentReport {
            name: self.name.to_string(),
            files: self.files,
            replications,
            failures,
            worst_failure_share,
            text,
            elapsed_seconds: elapsed,
            verified: None,
        })
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Order-preserving parallel map over `0..n`.
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// `value`, with the number of failed replications appended when nonzero.
pub(crate) fn cell(value: f64, digits: usize, failures: usize) -> String {
    let v = if value.is_finite() { format!("{value:.digits$}") } else { "-".to_string() };
    if failures > 0 {
        format!("{v} [{failures} failed]")
    } else {
        v
    }
}

pub(crate) fn share(failures: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        failures as f64 / total as f64
    }
}

/// The requested grid: `--gamma` wins over a configured grid, which wins over
/// `default`.
pub(crate) fn gamma_grid(opts: &RunOptions, default: &[f64]) -> Vec<f64> {
    match (opts.gamma, &opts.overrides.gamma_grid) {
        (Some(g), _) => vec![g],
        (None, Some(grid)) => grid.clone(),
        (None, None) => default.to_vec(),
    }
}
