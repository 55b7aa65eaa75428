//! Power of γ-KSD tests against a mean shift of the bulk when both
//! hypotheses carry the same far outliers.

use gstein_core::ksd::{decide, ksd_ustat, KernelSpec};
use gstein_core::metrics::mean_stderr;
use gstein_core::models::{GaussianParams, ModelSpec};
use gstein_core::scenario::{generate_dataset, replication_rng, ContaminationKind, ContaminationSpec, ScenarioConfig};
use gstein_core::Dataset;
use serde::{Deserialize, Serialize};

use super::{cell, gamma_grid, par_map, share, Experiment, ExperimentReport, Run};
use crate::config::RunOptions;
use crate::error::CliResult;
use crate::output::{line_plot, text_table, write_checked, Series};

pub const SHIFTS: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];
pub const GAMMAS: [f64; 3] = [0.0, 0.3, 0.5];
pub const N: usize = 200;
pub const RATE: f64 = 0.10;
pub const ALPHA: f64 = 0.05;
pub const OUTLIER_CENTER: [f64; 2] = [5.0, 5.0];
const NULL_STREAM: u32 = u32::MAX;
const PILOT_STREAM: u32 = u32::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub rep: u32,
    pub delta: f64,
    pub gamma: f64,
    pub failed: bool,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub delta: f64,
    pub gamma: f64,
    pub replications: usize,
    pub failures: usize,
    pub rejection_rate: f64,
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Settings {
    scenario: ScenarioConfig,
    shifts: Vec<f64>,
    alpha: f64,
    bootstrap_replicates: usize,
    bandwidth: f64,
    calibration: &'static str,
}

pub fn aggregate(records: &[PowerRecord]) -> Vec<PowerRow> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.delta, r.gamma)) {
            keys.push((r.delta, r.gamma));
        }
    }
    keys.into_iter()
        .map(|(delta, gamma)| {
            let cell: Vec<&PowerRecord> = records.iter().filter(|r| r.delta == delta && r.gamma == gamma).collect();
            let hits: Vec<f64> = cell.iter().filter(|r| !r.failed).map(|r| if r.reject { 1.0 } else { 0.0 }).collect();
            let (rate, se) = mean_stderr(&hits);
            PowerRow {
                delta,
                gamma,
                replications: cell.len(),
                failures: cell.len() - hits.len(),
                rejection_rate: rate,
                mc_stderr: se,
            }
        })
        .collect()
}

/// Contaminated sample whose bulk is `N((δ, …, δ), I)`.
fn shifted(base: &ScenarioConfig, delta: f64) -> ScenarioConfig {
    let mut s = base.clone();
    if let ModelSpec::Gaussian(g) = &base.model {
        let mean = g.mean.iter().map(|m| m + delta).collect();
        s.model = ModelSpec::Gaussian(GaussianParams { mean, ..g.clone() });
    }
    s
}

pub fn run(opts: &RunOptions) -> CliResult<(Vec<PowerRow>, ExperimentReport)> {
    let mut run = Run::new(Experiment::PowerTable5, opts)?;
    let target = match &opts.overrides.model {
        Some(ModelSpec::Gaussian(g)) => g.clone(),
        Some(_) => return Err(crate::error::CliError::Usage("power-table5 needs a gaussian model".into())),
        None => GaussianParams::standard(2),
    };
    let contamination = opts.overrides.contamination.clone().unwrap_or(ContaminationSpec {
        kind: ContaminationKind::Gaussian { center: OUTLIER_CENTER.to_vec(), scale: 1.0 },
        rate: RATE,
    });
    let base = ScenarioConfig {
        experiment: Experiment::PowerTable5.name().into(),
        model: ModelSpec::Gaussian(target.clone()),
        n: opts.overrides.n.unwrap_or(N),
        contamination,
        gamma_grid: gamma_grid(opts, &GAMMAS),
        replications: opts.replications(200, 500),
        seed: opts.seed(),
        output_dir: opts.out_dir().display().to_string(),
    };
    base.validate()?;
    let bootstrap = if opts.desk { 200 } else { 500 };
    let q = ModelSpec::Gaussian(target);
    let grid = base.gamma_grid.clone();
    let reps = base.replications;

    let pilot = generate_dataset(&base, 0, &mut replication_rng(base.seed, PILOT_STREAM, 0))?;
    let kernel = KernelSpec::median(&pilot)?;
    let stat = |d: &Dataset, g: f64| ksd_ustat(d, &q, g, &kernel).map(|k| k.statistic);

    let per_rep = par_map(reps, |r| {
        let r = r as u32;
        // One null set per replication, shared by every shift.
        let mut null_rng = replication_rng(base.seed, NULL_STREAM, r);
        let mut null: Vec<Vec<f64>> = vec![Vec::with_capacity(bootstrap); grid.len()];
        let mut null_ok = true;
        for b in 0..bootstrap {
            match generate_dataset(&base, b as u32, &mut null_rng) {
                Ok(d) => {
                    for (j, &g) in grid.iter().enumerate() {
                        match stat(&d, g) {
                            Ok(v) => null[j].push(v),
                            Err(_) => null_ok = false,
                        }
                    }
                }
                Err(_) => null_ok = false,
            }
        }
        let mut out = Vec::with_capacity(SHIFTS.len() * grid.len());
        for (c, &delta) in SHIFTS.iter().enumerate() {
            let data = generate_dataset(&shifted(&base, delta), r, &mut replication_rng(base.seed, c as u32, r));
            for (j, &g) in grid.iter().enumerate() {
                let res = match (&data, null_ok) {
                    (Ok(d), true) => stat(d, g).and_then(|s| decide(s, &null[j], ALPHA)).ok(),
                    _ => None,
                };
                out.push(match res {
                    Some(t) => PowerRecord {
                        rep: r,
                        delta,
                        gamma: g,
                        failed: false,
                        statistic: t.statistic,
                        critical_value: t.critical_value,
                        p_value: t.p_value,
                        reject: t.reject,
                    },
                    None => PowerRecord {
                        rep: r,
                        delta,
                        gamma: g,
                        failed: true,
                        statistic: f64::NAN,
                        critical_value: f64::NAN,
                        p_value: f64::NAN,
                        reject: false,
                    },
                });
            }
        }
        out
    });
    let records: Vec<PowerRecord> = per_rep.into_iter().flatten().collect();
    let stem = run.stem();
    let (rows, files) = write_checked(&run.dir, &stem, &records, aggregate)?;
    run.files.extend(files);

    let mut header = vec!["Shift delta".to_string()];
    header.extend(grid.iter().map(|g| if *g == 0.0 { "KSD (gamma=0.0)".to_string() } else { format!("gamma-KSD (gamma={g})") }));
    let lookup = |d: f64, g: f64| rows.iter().find(|r| r.delta == d && r.gamma == g);
    let body: Vec<Vec<String>> = SHIFTS
        .iter()
        .map(|&d| {
            let mut line = vec![format!("{d:.2}")];
            line.extend(grid.iter().map(|&g| lookup(d, g).map_or("-".into(), |r| cell(r.rejection_rate, 3, r.failures))));
            line
        })
        .collect();
    let text = format!(
        "Rejection rate, n={}, eps={}, alpha={ALPHA}, B={bootstrap}, MC={reps}\n{}",
        base.n,
        base.contamination.rate,
        text_table(&header, &body)
    );

    run.plot(&format!("{stem}_power_vs_delta.svg"), || {
        let series: Vec<Series> = grid
            .iter()
            .map(|&g| Series {
                label: format!("gamma={g}"),
                points: SHIFTS.iter().filter_map(|&d| lookup(d, g).map(|r| (d, r.rejection_rate))).collect(),
            })
            .collect();
        line_plot("Power vs shift", "delta", "rejection rate", &series)
    })?;

    let failures = rows.iter().map(|r| r.failures).sum();
    let worst = rows.iter().map(|r| share(r.failures, r.replications)).fold(0.0, f64::max);
    let settings = Settings {
        scenario: base,
        shifts: SHIFTS.to_vec(),
        alpha: ALPHA,
        bootstrap_replicates: bootstrap,
        bandwidth: kernel.bandwidth,
        calibration: "null-simulation",
    };
    let report = run.finish(text, settings, records.len(), failures, worst)?;
    Ok((rows, report))
}
