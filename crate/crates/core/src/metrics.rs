//! Error metrics for the simulation tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::MixtureParams;
use crate::numeric::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    TraceRmse,
    IntegratedRmse,
    MixtureRmse,
    ParamRmse,
    PredictiveRmse,
    Power,
    Type1,
}

/// Per-replication values of one metric and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub values: Vec<f64>,
    pub mean: f64,
    /// `sd / √R`, with the `R - 1` sample variance; zero for a single value.
    pub stderr: f64,
}

impl MetricReport {
    pub fn new(kind: MetricKind, values: Vec<f64>) -> Self {
        let (mean, stderr) = mean_stderr(&values);
        Self { kind, values, mean, stderr }
    }
}

/// Mean and standard error; `NaN` for an empty slice.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / r;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// `√(2 · mean[1 - (μ̂ᵀμ*)²])`; sign-blind.
pub fn trace_rmse(estimates: &[Vec<f64>], mu_star: &[f64]) -> f64 {
    let s: f64 = estimates.iter().map(|m| 1.0 - dot(m, mu_star).powi(2)).sum();
    (2.0 * (s / estimates.len() as f64).max(0.0)).sqrt()
}

/// Root mean squared error of scalar estimates around `truth`.
pub fn scalar_rmse(estimates: &[f64], truth: f64) -> f64 {
    (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt()
}

/// Trace RMSE of the directions plus RMSE of the concentrations.
pub fn integrated_rmse(mus: &[Vec<f64>], kappas: &[f64], mu_star: &[f64], kappa_star: f64) -> f64 {
    trace_rmse(mus, mu_star) + scalar_rmse(kappas, kappa_star)
}

/// `√(mean over all entries of (θ̂ - θ*)²)` for one estimate.
pub fn param_rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    let s: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    (s / truth.len() as f64).sqrt()
}

fn permutations(j: usize) -> Vec<Vec<usize>> {
    if j == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(j - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, j - 1);
            out.push(q);
        }
    }
    out
}

/// `(rmse_π, rmse_μ, rmse_σ²)` of one fit, with the label permutation that
/// minimizes their sum applied to all blocks. Each block averages squared
/// errors over its entries (`J`, `J·d`, `J`).
pub fn mixture_rmse(fit: &MixtureParams, truth: &MixtureParams) -> Result<(f64, f64, f64)> {
    let j = truth.components();
    if fit.components() != j || fit.dim() != truth.dim() {
        return Err(Error::InvalidArgument("mixtures differ in size".into()));
    }
    let (vf, vt) = (fit.variances(), truth.variances());
    let mut best = (f64::INFINITY, (0.0, 0.0, 0.0));
    for perm in permutations(j) {
        let pi: f64 = (0..j).map(|k| (fit.weights[perm[k]] - truth.weights[k]).powi(2)).sum::<f64>() / j as f64;
        let mu: f64 = (0..j)
            .map(|k| fit.means[perm[k]].iter().zip(&truth.means[k]).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (j * truth.dim()) as f64;
        let var: f64 = (0..j).map(|k| (vf[perm[k]] - vt[k]).powi(2)).sum::<f64>() / j as f64;
        let r = (pi.sqrt(), mu.sqrt(), var.sqrt());
        let total = r.0 + r.1 + r.2;
        if total < best.0 {
            best = (total, r);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_rmse_cases() {
        let mu = vec![1.0, 0.0, 0.0];
        assert_eq!(trace_rmse(&[mu.clone()], &mu), 0.0);
        assert_eq!(trace_rmse(&[vec![-1.0, 0.0, 0.0]], &mu), 0.0);
        assert!((trace_rmse(&[vec![0.0, 1.0, 0.0]], &mu) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn stderr_uses_sample_variance() {
        let r = MetricReport::new(MetricKind::Power, vec![1.0, 2.0, 3.0]);
        assert_eq!(r.mean, 2.0);
        assert!((r.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(3).len(), 6);
    }
}
