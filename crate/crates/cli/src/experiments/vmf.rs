//! Integrated RMSE of the vMF MLE and γ-score-matching estimators under
//! antipodal contamination.

use gstein_core::estimators::{fit_gamma, vmf_mle, Family, SolverConfig};
use gstein_core::metrics::{integrated_rmse, scalar_rmse, trace_rmse};
use gstein_core::models::{ModelSpec, VmfParams};
use gstein_core::scenario::{generate_dataset, replication_rng, ContaminationKind, ContaminationSpec, ScenarioConfig};
use serde::{Deserialize, Serialize};

use super::{cell, gamma_grid, par_map, share, Experiment, ExperimentReport, Run};
use crate::config::RunOptions;
use crate::error::{CliError, CliResult};
use crate::output::{line_plot, text_table, write_checked, Series};

pub const RATES: [f64; 4] = [0.0, 0.05, 0.10, 0.20];
pub const GAMMAS: [f64; 5] = [0.0, 0.05, 0.10, 0.20, 0.30];
pub const N: usize = 400;
pub const KAPPA: f64 = 10.0;
pub const SPIKE_KAPPA: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfRecord {
    pub eps: f64,
    pub rep: u32,
    /// `None` for the MLE.
    pub gamma: Option<f64>,
    pub failed: bool,
    /// Space-separated mean direction.
    pub mu: String,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfRow {
    pub eps: f64,
    pub estimator: String,
    pub gamma: Option<f64>,
    pub replications: usize,
    pub failures: usize,
    pub trace_rmse: f64,
    pub kappa_rmse: f64,
    pub integrated_rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Settings {
    scenario: ScenarioConfig,
    rates: Vec<f64>,
}

pub(crate) fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub(crate) fn split(s: &str) -> Vec<f64> {
    s.split_whitespace().map(|t| t.parse().unwrap_or(f64::NAN)).collect()
}

pub(crate) fn scenario_for(opts: &RunOptions, exp: Experiment) -> CliResult<ScenarioConfig> {
    let model = match &opts.overrides.model {
        None => ModelSpec::Vmf(VmfParams::new(vec![1.0, 0.0, 0.0], KAPPA)?),
        Some(m @ ModelSpec::Vmf(_)) => m.clone(),
        Some(_) => return Err(CliError::Usage(format!("{} needs a vmf model", exp.name()))),
    };
    let kind = match &opts.overrides.contamination {
        Some(c) => c.kind.clone(),
        None => ContaminationKind::AntipodalVmf { kappa: SPIKE_KAPPA },
    };
    let sc = ScenarioConfig {
        experiment: exp.name().into(),
        model,
        n: opts.overrides.n.unwrap_or(N),
        contamination: ContaminationSpec { kind, rate: 0.0 },
        gamma_grid: gamma_grid(opts, &GAMMAS),
        replications: opts.replications(20, 50),
        seed: opts.seed(),
        output_dir: opts.out_dir().display().to_string(),
    };
    sc.validate()?;
    Ok(sc)
}

pub fn aggregate(records: &[VmfRecord], truth: &VmfParams) -> Vec<VmfRow> {
    let mut keys: Vec<(f64, Option<f64>)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.eps && k.1 == r.gamma) {
            keys.push((r.eps, r.gamma));
        }
    }
    keys.iter()
        .map(|&(eps, gamma)| {
            let cell: Vec<&VmfRecord> = records.iter().filter(|r| r.eps == eps && r.gamma == gamma).collect();
            let ok: Vec<&&VmfRecord> = cell.iter().filter(|r| !r.failed).collect();
            let mus: Vec<Vec<f64>> = ok.iter().map(|r| split(&r.mu)).collect();
            let kappas: Vec<f64> = ok.iter().map(|r| r.kappa).collect();
            let (t, k, i) = if ok.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    trace_rmse(&mus, &truth.mu),
                    scalar_rmse(&kappas, truth.kappa),
                    integrated_rmse(&mus, &kappas, &truth.mu, truth.kappa),
                )
            };
            VmfRow {
                eps,
                estimator: if gamma.is_some() { "gamma-sme".into() } else { "mle".into() },
                gamma,
                replications: cell.len(),
                failures: cell.len() - ok.len(),
                trace_rmse: t,
                kappa_rmse: k,
                integrated_rmse: i,
            }
        })
        .collect()
}

pub fn run(opts: &RunOptions) -> CliResult<(Vec<VmfRow>, ExperimentReport)> {
    let mut run = Run::new(Experiment::VmfTable1, opts)?;
    let sc = scenario_for(opts, Experiment::VmfTable1)?;
    let ModelSpec::Vmf(truth) = sc.model.clone() else { unreachable!("checked in scenario") };
    let rates = opts.rates(&RATES);
    let reps = sc.replications;
    let family = Family::vmf(truth.dim());
    let solver = SolverConfig::default();

    let per_rep = par_map(rates.len() * reps, |i| {
        let (c, r) = (i / reps, (i % reps) as u32);
        let mut s = sc.clone();
        s.contamination.rate = rates[c];
        let mut rng = replication_rng(s.seed, c as u32, r);
        let record = |gamma: Option<f64>, fit: Option<ModelSpec>| match fit {
            Some(ModelSpec::Vmf(p)) => {
                VmfRecord { eps: rates[c], rep: r, gamma, failed: false, mu: join(&p.mu), kappa: p.kappa }
            }
            _ => VmfRecord { eps: rates[c], rep: r, gamma, failed: true, mu: String::new(), kappa: f64::NAN },
        };
        let data = match generate_dataset(&s, r, &mut rng) {
            Ok(d) => d,
            Err(_) => {
                return std::iter::once(None).chain(s.gamma_grid.iter().map(|&g| Some(g))).map(|g| record(g, None)).collect();
            }
        };
        let mut out = vec![record(None, vmf_mle(&data).ok().map(|f| f.params.unshifted().0.clone()))];
        for &g in &s.gamma_grid {
            let fit = fit_gamma(&family, &data, g, None, &solver).ok().map(|f| f.params.unshifted().0.clone());
            out.push(record(Some(g), fit));
        }
        out
    });
    let records: Vec<VmfRecord> = per_rep.into_iter().flatten().collect();
    let stem = run.stem();
    let (rows, files) = write_checked(&run.dir, &stem, &records, |r| aggregate(r, &truth))?;
    run.files.extend(files);

    let mut header = vec!["Estimator".to_string()];
    header.extend(rates.iter().map(|e| format!("{e:.2}")));
    let mut estimators = vec![None];
    estimators.extend(sc.gamma_grid.iter().map(|&g| Some(g)));
    let lookup = |e: f64, g: Option<f64>| rows.iter().find(|r| r.eps == e && r.gamma == g);
    let body: Vec<Vec<String>> = estimators
        .iter()
        .map(|&g| {
            let mut line = vec![g.map_or("MLE".to_string(), |g| format!("gamma={g:.2}"))];
            line.extend(rates.iter().map(|&e| lookup(e, g).map_or("-".into(), |r| cell(r.integrated_rmse, 2, r.failures))));
            line
        })
        .collect();
    let text = format!("Integrated RMSE, n={}, R={reps}\n{}", sc.n, text_table(&header, &body));

    run.plot(&format!("{stem}_rmse_vs_gamma.svg"), || {
        let series: Vec<Series> = rates
            .iter()
            .map(|&e| Series {
                label: format!("eps={e:.2}"),
                points: sc.gamma_grid.iter().filter_map(|&g| lookup(e, Some(g)).map(|r| (g, r.integrated_rmse))).collect(),
            })
            .collect();
        line_plot("Integrated RMSE vs gamma", "gamma", "integrated RMSE", &series)
    })?;

    let failures = rows.iter().map(|r| r.failures).sum();
    let worst = rows.iter().map(|r| share(r.failures, r.replications)).fold(0.0, f64::max);
    let report = run.finish(text, Settings { scenario: sc, rates }, records.len(), failures, worst)?;
    Ok((rows, report))
}
