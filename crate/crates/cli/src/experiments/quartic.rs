//! Quartic potential: MLE against γ-Stein estimators with and without
//! symmetric far outliers.

use gstein_core::estimators::{fit_gamma, quartic_mle, Family, SolverConfig};
use gstein_core::models::{ModelSpec, QuarticParams};
use gstein_core::scenario::{generate_dataset, replication_rng, ContaminationKind, ContaminationSpec, ScenarioConfig};
use serde::{Deserialize, Serialize};

use super::{cell, gamma_grid, par_map, share, Experiment, ExperimentReport, Run};
use crate::config::RunOptions;
use crate::error::{CliError, CliResult};
use crate::output::{line_plot, text_table, write_checked, Series};

pub const RATES: [f64; 2] = [0.0, 0.10];
pub const GAMMAS: [f64; 2] = [0.3, 0.5];
pub const N: usize = 500;
pub const OUTLIER_LOCATION: f64 = 8.0;
pub const OUTLIER_SPREAD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarticRecord {
    pub eps: f64,
    pub rep: u32,
    /// `None` for the MLE.
    pub gamma: Option<f64>,
    pub failed: bool,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarticRow {
    pub eps: f64,
    pub estimator: String,
    pub gamma: Option<f64>,
    pub replications: usize,
    pub failures: usize,
    pub mean_theta1: f64,
    pub mean_theta2: f64,
    pub mean_theta3: f64,
    /// `√(mean ‖θ̂ − θ*‖²)`.
    pub rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Settings {
    scenario: ScenarioConfig,
    rates: Vec<f64>,
}

pub fn aggregate(records: &[QuarticRecord], truth: &[f64; 3]) -> Vec<QuarticRow> {
    let mut keys: Vec<(f64, Option<f64>)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.eps, r.gamma)) {
            keys.push((r.eps, r.gamma));
        }
    }
    keys.into_iter()
        .map(|(eps, gamma)| {
            let cell: Vec<&QuarticRecord> = records.iter().filter(|r| r.eps == eps && r.gamma == gamma).collect();
            let ok: Vec<[f64; 3]> = cell.iter().filter(|r| !r.failed).map(|r| [r.theta1, r.theta2, r.theta3]).collect();
            let m = ok.len() as f64;
            let mean = |k: usize| ok.iter().map(|t| t[k]).sum::<f64>() / m;
            let sq: f64 = ok.iter().map(|t| (0..3).map(|k| (t[k] - truth[k]).powi(2)).sum::<f64>()).sum();
            QuarticRow {
                eps,
                estimator: if gamma.is_some() { "gamma-stein".into() } else { "mle".into() },
                gamma,
                replications: cell.len(),
                failures: cell.len() - ok.len(),
                mean_theta1: mean(0),
                mean_theta2: mean(1),
                mean_theta3: mean(2),
                rmse: (sq / m).sqrt(),
            }
        })
        .collect()
}

pub fn run(opts: &RunOptions) -> CliResult<(Vec<QuarticRow>, ExperimentReport)> {
    let mut run = Run::new(Experiment::QuarticTable4, opts)?;
    let truth = match &opts.overrides.model {
        None => QuarticParams::new(0.0, 2.0, -0.5)?,
        Some(ModelSpec::Quartic(q)) => q.clone(),
        Some(_) => return Err(CliError::Usage("quartic-table4 needs a quartic model".into())),
    };
    let kind = match &opts.overrides.contamination {
        Some(c) => c.kind.clone(),
        None => ContaminationKind::QuarticOutlier { location: OUTLIER_LOCATION, spread: OUTLIER_SPREAD },
    };
    let sc = ScenarioConfig {
        experiment: Experiment::QuarticTable4.name().into(),
        model: ModelSpec::Quartic(truth.clone()),
        n: opts.overrides.n.unwrap_or(N),
        contamination: ContaminationSpec { kind, rate: 0.0 },
        gamma_grid: gamma_grid(opts, &GAMMAS),
        replications: opts.replications(20, 50),
        seed: opts.seed(),
        output_dir: opts.out_dir().display().to_string(),
    };
    sc.validate()?;
    let rates = opts.rates(&RATES);
    let reps = sc.replications;
    let family = Family::quartic();
    let solver = SolverConfig::default();

    let per_rep = par_map(rates.len() * reps, |i| {
        let (c, r) = (i / reps, (i % reps) as u32);
        let mut s = sc.clone();
        s.contamination.rate = rates[c];
        let mut rng = replication_rng(s.seed, c as u32, r);
        let record = |gamma: Option<f64>, fit: Option<ModelSpec>| {
            let theta = match fit {
                Some(ModelSpec::Quartic(p)) => Some(p.theta),
                _ => None,
            };
            let t = theta.unwrap_or([f64::NAN; 3]);
            QuarticRecord { eps: rates[c], rep: r, gamma, failed: theta.is_none(), theta1: t[0], theta2: t[1], theta3: t[2] }
        };
        let Ok(data) = generate_dataset(&s, r, &mut rng) else {
            return std::iter::once(None).chain(s.gamma_grid.iter().map(|&g| Some(g))).map(|g| record(g, None)).collect();
        };
        let mut out = vec![record(None, quartic_mle(&data, &solver).ok().map(|f| f.params.unshifted().0.clone()))];
        for &g in &s.gamma_grid {
            let fit = fit_gamma(&family, &data, g, None, &solver).ok().map(|f| f.params.unshifted().0.clone());
            out.push(record(Some(g), fit));
        }
        out
    });
    let records: Vec<QuarticRecord> = per_rep.into_iter().flatten().collect();
    let stem = run.stem();
    let (rows, files) = write_checked(&run.dir, &stem, &records, |r| aggregate(r, &truth.theta))?;
    run.files.extend(files);

    let header: Vec<String> =
        ["Estimator", "Mean theta1", "Mean theta2", "Mean theta3", "RMSE"].iter().map(|s| s.to_string()).collect();
    let mut body = Vec::new();
    for &e in &rates {
        let name = if e == 0.0 { "No outliers".to_string() } else { format!("With outliers (eps={e:.2})") };
        body.push(vec![name, String::new(), String::new(), String::new(), String::new()]);
        body.push(vec![
            "True".into(),
            format!("{:.4}", truth.theta[0]),
            format!("{:.4}", truth.theta[1]),
            format!("{:.4}", truth.theta[2]),
            String::new(),
        ]);
        for r in rows.iter().filter(|r| r.eps == e) {
            body.push(vec![
                r.gamma.map_or("MLE".into(), |g| format!("gamma-Stein (gamma={g})")),
                cell(r.mean_theta1, 4, 0),
                cell(r.mean_theta2, 4, 0),
                cell(r.mean_theta3, 4, 0),
                cell(r.rmse, 4, r.failures),
            ]);
        }
    }
    let text = format!("Quartic potential, n={}, R={reps}\n{}", sc.n, text_table(&header, &body));

    run.plot(&format!("{stem}_rmse_vs_gamma.svg"), || {
        let series: Vec<Series> = rates
            .iter()
            .map(|&e| Series {
                label: format!("eps={e:.2}"),
                points: rows.iter().filter(|r| r.eps == e).filter_map(|r| r.gamma.map(|g| (g, r.rmse))).collect(),
            })
            .collect();
        line_plot("Quartic RMSE vs gamma", "gamma", "RMSE", &series)
    })?;

    let failures = rows.iter().map(|r| r.failures).sum();
    let worst = rows.iter().map(|r| share(r.failures, r.replications)).fold(0.0, f64::max);
    let report = run.finish(text, Settings { scenario: sc, rates }, records.len(), failures, worst)?;
    Ok((rows, report))
}
