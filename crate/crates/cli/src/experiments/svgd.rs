//! Posterior predictive RMSE of γ-SVGD for Poisson regression under leverage
//! and count contamination.

use gstein_core::metrics::mean_stderr;
use gstein_core::models::{sample, ModelSpec, PoissonRegParams};
use gstein_core::numeric::dot;
use gstein_core::scenario::{generate_dataset, replication_rng, ContaminationKind, ContaminationSpec, ScenarioConfig};
use gstein_core::selection::one_se_rule;
use gstein_core::svgd::{run_svgd, ParticleEnsemble, PoissonTarget, SvgdConfig};
use gstein_core::Dataset;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{cell, gamma_grid, par_map, share, Experiment, ExperimentReport, Run};
use crate::config::RunOptions;
use crate::error::{CliError, CliResult};
use crate::output::{line_plot, text_table, write_checked, Series};

pub const ALPHA_STAR: [f64; 7] = [1.5, 0.4, -0.3, 0.25, 0.2, -0.15, 0.1];
pub const GAMMAS: [f64; 5] = [0.0, 0.02, 0.05, 0.08, 0.10];
pub const N: usize = 400;
pub const N_TEST: usize = 1500;
pub const PARTICLES: usize = 32;
pub const RATE: f64 = 0.10;
pub const LEVERAGE_FACTOR: f64 = 6.0;
pub const SPIKE_MULTIPLIER: f64 = 10.0;
pub const INTERCEPT_PRIOR_VAR: f64 = 100.0;
pub const SLOPE_PRIOR_VAR: f64 = 1.0;
pub const PROJECTION_RADIUS: f64 = 10.0;
pub const INIT_SCALE: f64 = 0.1;

pub const SCENARIOS: [&str; 4] = ["clean", "y-contam", "x-contam", "xy-contam"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvgdRecord {
    pub scenario: String,
    pub rep: u32,
    pub gamma: f64,
    pub failed: bool,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvgdRow {
    pub scenario: String,
    pub gamma: f64,
    pub replications: usize,
    pub failures: usize,
    pub mean_rmse: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Settings {
    model: ModelSpec,
    n: usize,
    n_test: usize,
    particles: usize,
    scenarios: Vec<(String, ContaminationSpec)>,
    gamma_grid: Vec<f64>,
    replications: usize,
    seed: u64,
    svgd: SvgdConfig,
}

pub fn contamination(scenario: &str, rate: f64) -> ContaminationSpec {
    let kind = match scenario {
        "y-contam" => ContaminationKind::Outcome { multiplier: SPIKE_MULTIPLIER },
        "x-contam" => ContaminationKind::Covariate { factor: LEVERAGE_FACTOR },
        "xy-contam" => ContaminationKind::CovariateOutcome { factor: LEVERAGE_FACTOR, multiplier: SPIKE_MULTIPLIER },
        _ => return ContaminationSpec::none(),
    };
    ContaminationSpec { kind, rate }
}

/// `√(mean_i (ŷ_i − y_i)²)` with `ŷ_i` the particle average of `exp(α₀ + xᵢᵀα₁:)`.
pub fn predictive_rmse(particles: &[Vec<f64>], test: &Dataset) -> f64 {
    let y = test.response.as_ref().expect("test set carries counts");
    let m = particles.len() as f64;
    let sq: f64 = test
        .rows()
        .zip(y)
        .map(|(x, &yi)| {
            let pred = particles.iter().map(|a| (a[0] + dot(&a[1..], x)).exp()).sum::<f64>() / m;
            (pred - yi as f64).powi(2)
        })
        .sum();
    (sq / test.len() as f64).sqrt()
}

pub fn aggregate(records: &[SvgdRecord]) -> Vec<SvgdRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.scenario && k.1 == r.gamma) {
            keys.push((r.scenario.clone(), r.gamma));
        }
    }
    keys.into_iter()
        .map(|(scenario, gamma)| {
            let cell: Vec<&SvgdRecord> = records.iter().filter(|r| r.scenario == scenario && r.gamma == gamma).collect();
            let vals: Vec<f64> = cell.iter().filter(|r| !r.failed).map(|r| r.rmse).collect();
            let (mean_rmse, stderr) = mean_stderr(&vals);
            SvgdRow { scenario, gamma, replications: cell.len(), failures: cell.len() - vals.len(), mean_rmse, stderr }
        })
        .collect()
}

pub fn run(opts: &RunOptions) -> CliResult<(Vec<SvgdRow>, ExperimentReport)> {
    let mut run = Run::new(Experiment::SvgdTable6, opts)?;
    let model = match &opts.overrides.model {
        Some(m @ ModelSpec::PoissonRegression(_)) => m.clone(),
        Some(_) => return Err(CliError::Usage("svgd-table6 needs a poisson-regression model".into())),
        None => ModelSpec::PoissonRegression(PoissonRegParams::split_prior(
            ALPHA_STAR.to_vec(),
            INTERCEPT_PRIOR_VAR,
            SLOPE_PRIOR_VAR,
        )?),
    };
    let ModelSpec::PoissonRegression(params) = &model else { unreachable!("matched above") };
    let grid = gamma_grid(opts, &GAMMAS);
    let scenarios: Vec<(String, ContaminationSpec)> = match &opts.overrides.contamination {
        Some(c) => vec![("custom".into(), c.clone())],
        None => SCENARIOS.iter().map(|s| (s.to_string(), contamination(s, RATE))).collect(),
    };
    let n = opts.overrides.n.unwrap_or(N);
    let reps = opts.replications(10, 20);
    let seed = opts.seed();
    let base_cfg = SvgdConfig { step: 0.05, projection_radius: Some(PROJECTION_RADIUS), ..SvgdConfig::default() };
    let dim = params.alpha.len();

    let per_rep = par_map(scenarios.len() * reps, |i| {
        let (c, r) = (i / reps, (i % reps) as u32);
        let (name, spec) = &scenarios[c];
        let sc = ScenarioConfig {
            experiment: Experiment::SvgdTable6.name().into(),
            model: model.clone(),
            n,
            contamination: spec.clone(),
            gamma_grid: grid.clone(),
            replications: reps,
            seed,
            output_dir: String::new(),
        };
        let mut rng = replication_rng(seed, c as u32, r);
        let failed = |g: f64| SvgdRecord { scenario: name.clone(), rep: r, gamma: g, failed: true, rmse: f64::NAN };
        let (Ok(train), Ok(test)) = (generate_dataset(&sc, r, &mut rng), sample(&model, N_TEST, &mut rng)) else {
            return grid.iter().map(|&g| failed(g)).collect();
        };
        let y = train.response.as_ref().expect("regression data carries counts");
        let shift = (y.iter().sum::<u64>() as f64 / y.len() as f64 + 0.5).ln();
        let init: Vec<Vec<f64>> = (0..PARTICLES)
            .map(|_| {
                let mut p: Vec<f64> = (0..dim).map(|_| INIT_SCALE * rng.sample::<f64, _>(StandardNormal)).collect();
                p[0] += shift;
                p
            })
            .collect();
        let init_seed = seed ^ ((c as u64) << 32 | r as u64);
        grid.iter()
            .map(|&g| {
                let out = PoissonTarget::new(&train, params.prior_variances.clone(), g).and_then(|t| {
                    let ens = ParticleEnsemble::new(init.clone(), init_seed)?;
                    run_svgd(&SvgdConfig { gamma_target: g, ..base_cfg.clone() }, &t, &ens)
                });
                match out {
                    Ok(o) => {
                        let rmse = predictive_rmse(&o.ensemble.positions, &test);
                        if rmse.is_finite() {
                            SvgdRecord { scenario: name.clone(), rep: r, gamma: g, failed: false, rmse }
                        } else {
                            failed(g)
                        }
                    }
                    Err(_) => failed(g),
                }
            })
            .collect::<Vec<_>>()
    });
    let records: Vec<SvgdRecord> = per_rep.into_iter().flatten().collect();
    let stem = run.stem();
    let (rows, files) = write_checked(&run.dir, &stem, &records, aggregate)?;
    run.files.extend(files);

    let lookup = |s: &str, g: f64| rows.iter().find(|r| r.scenario == s && r.gamma == g);
    let mut header = vec!["gamma".to_string()];
    header.extend(scenarios.iter().map(|s| s.0.clone()));
    let mut body: Vec<Vec<String>> = grid
        .iter()
        .map(|&g| {
            let mut line = vec![format!("{g:.2}")];
            line.extend(scenarios.iter().map(|(s, _)| {
                lookup(s, g).map_or("-".into(), |r| format!("{} +- {:.3}", cell(r.mean_rmse, 3, r.failures), r.stderr))
            }));
            line
        })
        .collect();
    let mut sel = vec!["one-SE".to_string()];
    for (s, _) in &scenarios {
        let mean: Vec<f64> = grid.iter().map(|&g| lookup(s, g).map_or(f64::NAN, |r| r.mean_rmse)).collect();
        let se: Vec<f64> = grid.iter().map(|&g| lookup(s, g).map_or(f64::NAN, |r| r.stderr)).collect();
        sel.push(one_se_rule(&grid, &mean, &se).map_or("-".into(), |(_, g)| format!("{g:.2}")));
    }
    body.push(sel);
    let text = format!(
        "Posterior predictive RMSE (mean +- s.e.), n={n}, test={N_TEST}, M={PARTICLES}, R={reps}\n{}",
        text_table(&header, &body)
    );

    run.plot(&format!("{stem}_rmse_vs_gamma.svg"), || {
        let series: Vec<Series> = scenarios
            .iter()
            .map(|(s, _)| Series {
                label: s.clone(),
                points: grid.iter().filter_map(|&g| lookup(s, g).map(|r| (g, r.mean_rmse))).collect(),
            })
            .collect();
        line_plot("Predictive RMSE vs gamma", "gamma", "RMSE", &series)
    })?;

    let failures = rows.iter().map(|r| r.failures).sum();
    let worst = rows.iter().map(|r| share(r.failures, r.replications)).fold(0.0, f64::max);
    let settings = Settings {
        model,
        n,
        n_test: N_TEST,
        particles: PARTICLES,
        scenarios,
        gamma_grid: grid,
        replications: reps,
        seed,
        svgd: base_cfg,
    };
    let report = run.finish(text, settings, records.len(), failures, worst)?;
    Ok((rows, report))
}
