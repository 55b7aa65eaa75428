//! Derivative-free polytope search and the moment-norm solver built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{weighted_mean, Family, FitResult};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numeric::norm_sq;

/// Settings for [`solve_moment_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Simplex-size tolerance; the residual target is `1e2 · tol`.
    pub tol: f64,
    /// Objective evaluations allowed per restart.
    pub max_evals: usize,
    pub restarts: usize,
    /// Initial simplex edge, relative to `1 + |θ_k|`.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: super::DEFAULT_TOL, max_evals: 4000, restarts: 5, initial_step: 0.1, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// Terminated by the size tolerance rather than the evaluation cap.
    pub converged: bool,
}

/// Nelder–Mead with dimension-adaptive coefficients. Non-finite objective
/// values are treated as `+∞`.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    steps: &[f64],
    tol: f64,
    max_evals: usize,
) -> NelderMeadOutcome {
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n > 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for k in 0..n {
        let mut p = start.to_vec();
        p[k] += steps[k];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let mut evals = n + 1;
    let mut converged = false;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = vals[n] - vals[0];
        if size <= tol && (spread <= tol * tol || !spread.is_finite() && size == 0.0) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (pts[n][k] - centroid[k])).collect() };
        let xr = along(-alpha);
        let fr = eval(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-alpha * beta);
            let fe = eval(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(-alpha * gamma);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(gamma);
            let fc = eval(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            for k in 0..n {
                pts[i][k] = pts[0][k] + delta * (pts[i][k] - pts[0][k]);
            }
            vals[i] = eval(&pts[i]);
        }
        evals += n;
    }
    let best = (0..=n).min_by(|a, b| vals[*a].total_cmp(&vals[*b])).expect("non-empty simplex");
    NelderMeadOutcome { x: pts[best].clone(), value: vals[best], evals, converged }
}

/// Minimizes `‖Ū_γ(θ)‖²` (self-normalized weights) over the family's
/// parameter vector with restarted polytope search.
pub fn solve_moment_norm(
    family: &Family,
    data: &Dataset,
    gamma: f64,
    init: &[f64],
    cfg: &SolverConfig,
) -> Result<FitResult> {
    if family.equation_count() < family.param_count() {
        return Err(Error::InvalidArgument("fewer equations than parameters".into()));
    }
    let objective = |t: &[f64]| match weighted_mean(family, t, data, gamma) {
        Ok(v) => norm_sq(&v),
        Err(_) => f64::INFINITY,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = init.to_vec();
    let mut best_val = objective(init);
    let mut last_converged = false;
    let mut evals = 0;
    let mut trace = Vec::new();
    for r in 0..cfg.restarts.max(1) {
        let scale = cfg.initial_step * 0.5f64.powi(r as i32);
        let start: Vec<f64> = if r == 0 {
            best.clone()
        } else {
            best.iter().map(|v| v + 0.1 * scale * (1.0 + v.abs()) * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let steps: Vec<f64> = start.iter().map(|v| scale * (1.0 + v.abs())).collect();
        let out = nelder_mead(objective, &start, &steps, cfg.tol, cfg.max_evals);
        evals += out.evals;
        if out.value <= best_val {
            best = out.x;
            best_val = out.value;
            last_converged = out.converged;
        }
        trace.push(best.clone());
    }
    if !best_val.is_finite() {
        return Err(Error::NonFinite { what: "moment objective", point: best });
    }
    let residual = best_val.sqrt();
    let square = family.equation_count() == family.param_count();
    let mut flags = Vec::new();
    let converged = if residual < 1e2 * cfg.tol {
        true
    } else if !square && last_converged {
        flags.push("overdetermined: minimum residual is positive".into());
        true
    } else {
        false
    };
    Ok(FitResult {
        params: family.model(&best)?,
        iterations: evals,
        converged,
        final_residual: residual,
        trace: Some(trace),
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = nelder_mead(f, &[-1.2, 1.0], &[0.1, 0.1], 1e-10, 20_000);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_in_five_dimensions() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum::<f64>();
        let out = nelder_mead(f, &[0.0; 5], &[0.2; 5], 1e-9, 50_000);
        assert!(out.x.iter().all(|v| (v - 0.5).abs() < 1e-6));
    }
}
