//! Normal mixture fits by γ-Stein homotopy and by EM under heavy-tailed
//! contamination.

use gstein_core::estimators::{fit_gamma, nmm_em_mle, trimmed_kmeans, Family, SolverConfig};
use gstein_core::metrics::{mean_stderr, mixture_rmse};
use gstein_core::models::{MixtureParams, ModelSpec};
use gstein_core::scenario::{generate_dataset, replication_rng, ContaminationKind, ContaminationSpec, ScenarioConfig};
use serde::{Deserialize, Serialize};

use super::{cell, par_map, share, Experiment, ExperimentReport, Run};
use crate::config::RunOptions;
use crate::error::{CliError, CliResult};
use crate::output::{text_table, write_checked};

pub const RATES: [f64; 4] = [0.0, 0.03, 0.05, 0.10];
pub const GAMMA: f64 = 0.3;
pub const N: usize = 500;
pub const KMEANS_TRIM: f64 = 0.1;
pub const EM_TOL: f64 = 1e-8;
pub const EM_MAX_ITER: usize = 1000;

pub const STEIN: &str = "gamma-stein";
pub const EM: &str = "mle-em";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmmRecord {
    pub eps: f64,
    pub rep: u32,
    pub estimator: String,
    pub failed: bool,
    pub rmse_pi: f64,
    pub rmse_mu: f64,
    pub rmse_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmmRow {
    pub eps: f64,
    pub estimator: String,
    pub replications: usize,
    pub failures: usize,
    pub rmse_pi: f64,
    pub rmse_mu: f64,
    pub rmse_sigma: f64,
    pub rmse_sigma_stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Settings {
    scenario: ScenarioConfig,
    rates: Vec<f64>,
    gamma: f64,
    kmeans_trim: f64,
}

pub fn truth() -> MixtureParams {
    MixtureParams::new(vec![0.5, 0.5], vec![vec![-2.0, 0.0], vec![2.0, 0.0]], vec![1.0 / 0.6, 1.0 / 0.6])
        .expect("valid mixture")
}

pub fn aggregate(records: &[NmmRecord]) -> Vec<NmmRow> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.eps && k.1 == r.estimator) {
            keys.push((r.eps, r.estimator.clone()));
        }
    }
    keys.into_iter()
        .map(|(eps, estimator)| {
            let cell: Vec<&NmmRecord> = records.iter().filter(|r| r.eps == eps && r.estimator == estimator).collect();
            let ok: Vec<&&NmmRecord> = cell.iter().filter(|r| !r.failed).collect();
            // pooled over replications: sqrt of the mean squared error
            let pooled = |f: fn(&NmmRecord) -> f64| {
                let (msq, se) = mean_stderr(&ok.iter().map(|r| f(r).powi(2)).collect::<Vec<_>>());
                let rmse = msq.sqrt();
                (rmse, if rmse > 0.0 { se / (2.0 * rmse) } else { 0.0 })
            };
            let sigma = pooled(|r| r.rmse_sigma);
            NmmRow {
                eps,
                estimator,
                replications: cell.len(),
                failures: cell.len() - ok.len(),
                rmse_pi: pooled(|r| r.rmse_pi).0,
                rmse_mu: pooled(|r| r.rmse_mu).0,
                rmse_sigma: sigma.0,
                rmse_sigma_stderr: sigma.1,
            }
        })
        .collect()
}

pub fn run(opts: &RunOptions) -> CliResult<(Vec<NmmRow>, ExperimentReport)> {
    let mut run = Run::new(Experiment::NmmTable3, opts)?;
    let truth = match &opts.overrides.model {
        None => truth(),
        Some(ModelSpec::Mixture(m)) => m.clone(),
        Some(_) => return Err(CliError::Usage("nmm-table3 needs a mixture model".into())),
    };
    let kind = match &opts.overrides.contamination {
        Some(c) => c.kind.clone(),
        None => ContaminationKind::StudentT { df: 4.0, scale: 5.0, center: vec![0.0; truth.dim()] },
    };
    let gamma = opts.gamma.or_else(|| opts.overrides.gamma_grid.as_ref().and_then(|g| g.first().copied())).unwrap_or(GAMMA);
    let sc = ScenarioConfig {
        experiment: Experiment::NmmTable3.name().into(),
        model: ModelSpec::Mixture(truth.clone()),
        n: opts.overrides.n.unwrap_or(N),
        contamination: ContaminationSpec { kind, rate: 0.0 },
        gamma_grid: vec![gamma],
        replications: opts.replications(20, 50),
        seed: opts.seed(),
        output_dir: opts.out_dir().display().to_string(),
    };
    sc.validate()?;
    let rates = opts.rates(&RATES);
    let reps = sc.replications;
    let family = Family::mixture(truth.components(), truth.dim());
    let solver = SolverConfig::default();

    let per_rep = par_map(rates.len() * reps, |i| {
        let (c, r) = (i / reps, (i % reps) as u32);
        let mut s = sc.clone();
        s.contamination.rate = rates[c];
        let mut rng = replication_rng(s.seed, c as u32, r);
        let record = |estimator: &str, fit: Option<MixtureParams>| {
            let errs = fit.and_then(|p| mixture_rmse(&p, &truth).ok());
            let (a, b, d) = errs.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            NmmRecord {
                eps: rates[c],
                rep: r,
                estimator: estimator.into(),
                failed: errs.is_none(),
                rmse_pi: a,
                rmse_mu: b,
                rmse_sigma: d,
            }
        };
        let start = generate_dataset(&s, r, &mut rng)
            .and_then(|d| trimmed_kmeans(&d, truth.components(), KMEANS_TRIM, &mut rng).map(|init| (d, init)));
        let Ok((data, init)) = start else {
            return vec![record(STEIN, None), record(EM, None)];
        };
        let mixture = |m: &ModelSpec| match m.unshifted().0 {
            ModelSpec::Mixture(p) => Some(p.clone()),
            _ => None,
        };
        let stein = fit_gamma(&family, &data, gamma, Some(&ModelSpec::Mixture(init.clone())), &solver)
            .ok()
            .and_then(|f| mixture(&f.params));
        let em = nmm_em_mle(&data, &init, EM_TOL, EM_MAX_ITER).ok().and_then(|f| mixture(&f.params));
        vec![record(STEIN, stein), record(EM, em)]
    });
    let records: Vec<NmmRecord> = per_rep.into_iter().flatten().collect();
    let stem = run.stem();
    let (rows, files) = write_checked(&run.dir, &stem, &records, aggregate)?;
    run.files.extend(files);

    let header: Vec<String> =
        ["Contamination", "Estimator", "RMSE(pi)", "RMSE(mu)", "RMSE(Sigma)"].iter().map(|s| s.to_string()).collect();
    let mut body = Vec::new();
    for &e in &rates {
        for (est, label) in [(STEIN, format!("gamma-Stein ({gamma})")), (EM, "MLE (EM)".to_string())] {
            if let Some(r) = rows.iter().find(|r| r.eps == e && r.estimator == est) {
                body.push(vec![
                    format!("{:.0}%", 100.0 * e),
                    label,
                    cell(r.rmse_pi, 3, 0),
                    cell(r.rmse_mu, 3, 0),
                    cell(r.rmse_sigma, 3, r.failures),
                ]);
            }
        }
    }
    let text = format!("RMSE over replications, n={}, R={reps}\n{}", sc.n, text_table(&header, &body));

    let failures = rows.iter().map(|r| r.failures).sum();
    let worst = rows.iter().map(|r| share(r.failures, r.replications)).fold(0.0, f64::max);
    let settings = Settings { scenario: sc, rates, gamma, kmeans_trim: KMEANS_TRIM };
    let report = run.finish(text, settings, records.len(), failures, worst)?;
    Ok((rows, report))
}
