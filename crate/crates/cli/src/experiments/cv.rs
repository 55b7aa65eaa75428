//! Cross-validated choice of γ for the vMF model, scored by the held-out
//! γ₀-KSD for several anchors γ₀.

use gstein_core::estimators::{Family, SolverConfig};
use gstein_core::models::ModelSpec;
use gstein_core::scenario::{generate_dataset, replication_rng, ScenarioConfig};
use gstein_core::selection::{cv_select, stability, Validator, DEFAULT_FOLDS};
use serde::{Deserialize, Serialize};

use super::vmf::{join, split};
use super::{cell, par_map, share, Experiment, ExperimentReport, Run};
use crate::config::RunOptions;
use crate::error::CliResult;
use crate::output::{line_plot, text_table, to_csv_string, Series};

pub const RATES: [f64; 4] = [0.0, 0.05, 0.10, 0.20];
pub const ANCHORS: [f64; 3] = [0.0, 0.05, 0.10];
pub const GRID: [f64; 5] = [0.0, 0.05, 0.10, 0.20, 0.30];
/// Offset separating fold-assignment streams from data streams.
const FOLD_STREAM: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub eps: f64,
    pub gamma0: f64,
    pub rep: u32,
    pub failed: bool,
    pub gamma_argmin: f64,
    pub gamma_one_se: f64,
    /// Space-separated CV curve over the grid.
    pub cv_mean: String,
    pub cv_stderr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub eps: f64,
    pub gamma0: f64,
    pub replications: usize,
    pub failures: usize,
    pub modal_argmin: f64,
    pub argmin_share: f64,
    pub modal_one_se: f64,
    pub one_se_share: f64,
    /// Mean over replications of the CV score at the argmin.
    pub mean_min_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurveRow {
    pub eps: f64,
    pub gamma0: f64,
    pub gamma: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Settings {
    scenario: ScenarioConfig,
    rates: Vec<f64>,
    anchors: Vec<f64>,
    folds: usize,
    validator: &'static str,
}

fn keys(records: &[CvRecord]) -> Vec<(f64, f64)> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.eps, r.gamma0)) {
            keys.push((r.eps, r.gamma0));
        }
    }
    keys
}

pub fn aggregate(records: &[CvRecord]) -> Vec<CvRow> {
    keys(records)
        .into_iter()
        .map(|(eps, gamma0)| {
            let cell: Vec<&CvRecord> = records.iter().filter(|r| r.eps == eps && r.gamma0 == gamma0).collect();
            let ok: Vec<&&CvRecord> = cell.iter().filter(|r| !r.failed).collect();
            let argmins: Vec<f64> = ok.iter().map(|r| r.gamma_argmin).collect();
            let one_se: Vec<f64> = ok.iter().map(|r| r.gamma_one_se).collect();
            let (ma, sa) = stability(&argmins).unwrap_or((f64::NAN, f64::NAN));
            let (mo, so) = stability(&one_se).unwrap_or((f64::NAN, f64::NAN));
            let min_scores: Vec<f64> =
                ok.iter().map(|r| split(&r.cv_mean).into_iter().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min)).collect();
            CvRow {
                eps,
                gamma0,
                replications: cell.len(),
                failures: cell.len() - ok.len(),
                modal_argmin: ma,
                argmin_share: sa,
                modal_one_se: mo,
                one_se_share: so,
                mean_min_score: min_scores.iter().sum::<f64>() / min_scores.len() as f64,
            }
        })
        .collect()
}

/// Mean CV curve per cell, averaged over replications with a finite value.
pub fn curves(records: &[CvRecord], grid: &[f64]) -> Vec<CvCurveRow> {
    let mut out = Vec::new();
    for (eps, gamma0) in keys(records) {
        let curves: Vec<Vec<f64>> =
            records.iter().filter(|r| r.eps == eps && r.gamma0 == gamma0 && !r.failed).map(|r| split(&r.cv_mean)).collect();
        for (j, &gamma) in grid.iter().enumerate() {
            let vals: Vec<f64> = curves.iter().filter_map(|c| c.get(j).copied()).filter(|v| v.is_finite()).collect();
            let mean_score = if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / vals.len() as f64 };
            out.push(CvCurveRow { eps, gamma0, gamma, mean_score });
        }
    }
    out
}

pub fn run(opts: &RunOptions) -> CliResult<(Vec<CvRow>, ExperimentReport)> {
    let mut run = Run::new(Experiment::CvTable2, opts)?;
    let mut sc = super::vmf::scenario_for(opts, Experiment::CvTable2)?;
    sc.gamma_grid = opts.overrides.gamma_grid.clone().unwrap_or_else(|| GRID.to_vec());
    let grid = sc.gamma_grid.clone();
    let rates = opts.rates(&RATES);
    let anchors = match opts.gamma0 {
        Some(g) => vec![g],
        None => ANCHORS.to_vec(),
    };
    let reps = sc.replications;
    let ModelSpec::Vmf(truth) = &sc.model else { unreachable!("checked in scenario") };
    let family = Family::vmf(truth.dim());
    let solver = SolverConfig::default();

    let per_rep = par_map(rates.len() * reps, |i| {
        let (c, r) = (i / reps, (i % reps) as u32);
        let mut s = sc.clone();
        s.contamination.rate = rates[c];
        let data = generate_dataset(&s, r, &mut replication_rng(s.seed, c as u32, r));
        let folds = replication_rng(s.seed, FOLD_STREAM | c as u32, r);
        anchors
            .iter()
            .map(|&g0| {
                let res = data.as_ref().ok().and_then(|d| {
                    cv_select(d, &family, &grid, DEFAULT_FOLDS, Validator::Ksd(g0), &solver, &mut folds.clone()).ok()
                });
                match res {
                    Some((t, sel)) => CvRecord {
                        eps: rates[c],
                        gamma0: g0,
                        rep: r,
                        failed: false,
                        gamma_argmin: sel.gamma_argmin,
                        gamma_one_se: sel.gamma_one_se,
                        cv_mean: join(&t.mean),
                        cv_stderr: join(&t.stderr),
                    },
                    None => CvRecord {
                        eps: rates[c],
                        gamma0: g0,
                        rep: r,
                        failed: true,
                        gamma_argmin: f64::NAN,
                        gamma_one_se: f64::NAN,
                        cv_mean: String::new(),
                        cv_stderr: String::new(),
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    let records: Vec<CvRecord> = per_rep.into_iter().flatten().collect();
    let stem = run.stem();
    let (rows, files) = crate::output::write_checked(&run.dir, &stem, &records, aggregate)?;
    run.files.extend(files);
    let curve_rows = curves(&records, &grid);
    run.write(&format!("{stem}_curves.csv"), &to_csv_string(&curve_rows)?)?;

    let mut header = vec!["eps".to_string()];
    for g0 in &anchors {
        header.push(format!("g0={g0:.2} argmin/prop"));
        header.push(format!("g0={g0:.2} one-se/prop"));
        header.push(format!("g0={g0:.2} KSD"));
    }
    let body: Vec<Vec<String>> = rates
        .iter()
        .map(|&e| {
            let mut line = vec![format!("{e:.2}")];
            for &g0 in &anchors {
                match rows.iter().find(|r| r.eps == e && r.gamma0 == g0) {
                    Some(r) => {
                        line.push(cell(r.modal_argmin, 2, r.failures) + &format!(" / {:.2}", r.argmin_share));
                        line.push(format!("{:.2} / {:.2}", r.modal_one_se, r.one_se_share));
                        line.push(format!("{:.4}", r.mean_min_score));
                    }
                    None => line.extend(["-".to_string(), "-".to_string(), "-".to_string()]),
                }
            }
            line
        })
        .collect();
    let text = format!(
        "Cross-validated gamma, {DEFAULT_FOLDS}-fold, held-out gamma0-KSD, n={}, R={reps}\n{}",
        sc.n,
        text_table(&header, &body)
    );

    for &g0 in &anchors {
        run.plot(&format!("{stem}_cv_curve_g0_{g0:.2}.svg"), || {
            let series: Vec<Series> = rates
                .iter()
                .map(|&e| Series {
                    label: format!("eps={e:.2}"),
                    points: curve_rows.iter().filter(|c| c.eps == e && c.gamma0 == g0).map(|c| (c.gamma, c.mean_score)).collect(),
                })
                .collect();
            line_plot(&format!("CV score vs gamma (gamma0={g0:.2})"), "gamma", "held-out KSD", &series)
        })?;
    }

    let failures = rows.iter().map(|r| r.failures).sum();
    let worst = rows.iter().map(|r| share(r.failures, r.replications)).fold(0.0, f64::max);
    let settings = Settings { scenario: sc, rates, anchors, folds: DEFAULT_FOLDS, validator: "ksd" };
    let report = run.finish(text, settings, records.len(), failures, worst)?;
    Ok((rows, report))
}
