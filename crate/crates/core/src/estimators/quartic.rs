use nalgebra::{Matrix3, Vector3};

use super::{solve_moment_norm, Family, FitResult, SolverConfig};
use super::optimize::nelder_mead;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::sample::quartic_support;
use crate::models::{ModelSpec, QuarticParams};
use crate::quadrature::QuadratureGrid;

/// Nodes for the quadrature normalizer inside [`quartic_mle`].
const MLE_NODES: usize = 2001;

fn check_scalar(data: &Dataset) -> Result<()> {
    if data.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: data.dim() });
    }
    if data.len() < 3 {
        return Err(Error::InvalidArgument("quartic fits need at least three points".into()));
    }
    Ok(())
}

/// The `γ = 0` root, which is linear in `θ`: `θ₀ = -G⁻¹ b` with
/// `G = mean φφᵀ`, `φ = (1, 2x, 4x³)`, `b = mean (0, 2, 12x²)`.
pub fn quartic_score_matching(data: &Dataset) -> Result<[f64; 3]> {
    check_scalar(data)?;
    let mut g = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for x in data.values() {
        let phi = Vector3::new(1.0, 2.0 * x, 4.0 * x * x * x);
        g += phi * phi.transpose();
        b += Vector3::new(0.0, 2.0, 12.0 * x * x);
    }
    let theta = -g.lu().solve(&b).ok_or(Error::InvalidArgument("degenerate quartic design".into()))?;
    Ok([theta[0], theta[1], theta[2]])
}

/// γ-score-matching fit of the quartic potential, started from the `γ = 0`
/// root unless `init` is given.
pub fn quartic_fit(data: &Dataset, gamma: f64, init: Option<[f64; 3]>, cfg: &SolverConfig) -> Result<FitResult> {
    let start = match init {
        Some(t) => t,
        None => quartic_score_matching(data)?,
    };
    solve_moment_norm(&Family::quartic(), data, gamma, &start, cfg)
}

/// `log Z_θ` by midpoint quadrature over the region where `log f_θ > max - 40`.
fn log_normalizer(theta: [f64; 3]) -> Result<f64> {
    let p = QuarticParams::new(theta[0], theta[1], theta[2])?;
    let (lo, hi) = quartic_support(&p);
    let mut half = 0.5 * (hi - lo);
    let centre = 0.5 * (hi + lo);
    for _ in 0..2 {
        let grid = QuadratureGrid::uniform_1d(centre - half, centre + half, MLE_NODES)?;
        let log_u: Vec<f64> = grid.nodes().map(|x| p.log_u(x[0])).collect();
        match grid.normalize(&log_u) {
            Ok((log_z, _)) => return Ok(log_z),
            Err(Error::DomainCoverage { .. }) => half *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DomainCoverage { mass: f64::NAN })
}

/// Maximum likelihood with the normalizer computed by quadrature per candidate.
pub fn quartic_mle(data: &Dataset, cfg: &SolverConfig) -> Result<FitResult> {
    check_scalar(data)?;
    let xs = data.values();
    let n = xs.len() as f64;
    let nll = |t: &[f64]| -> f64 {
        if !(t[2] < 0.0) {
            return f64::INFINITY;
        }
        let p = QuarticParams::unchecked([t[0], t[1], t[2]]);
        match log_normalizer([t[0], t[1], t[2]]) {
            Ok(log_z) => log_z - xs.iter().map(|x| p.log_u(*x)).sum::<f64>() / n,
            Err(_) => f64::INFINITY,
        }
    };
    let mut start = quartic_score_matching(data).unwrap_or([0.0, 0.0, -0.1]);
    if !(start[2] < 0.0) || !nll(&start).is_finite() {
        start = [0.0, 0.0, -0.1];
    }
    let mut best = start.to_vec();
    let mut best_val = nll(&best);
    let mut evals = 0;
    let mut converged = false;
    for r in 0..cfg.restarts.max(1) {
        let scale = cfg.initial_step * 0.5f64.powi(r as i32);
        let steps: Vec<f64> = best.iter().map(|v| scale * (0.1 + v.abs())).collect();
        let out = nelder_mead(nll, &best, &steps, cfg.tol, cfg.max_evals);
        evals += out.evals;
        if out.value <= best_val {
            best = out.x;
            best_val = out.value;
            converged = out.converged;
        }
    }
    if !best_val.is_finite() {
        return Err(Error::NonFinite { what: "quartic likelihood", point: best });
    }
    Ok(FitResult {
        params: ModelSpec::Quartic(QuarticParams::new(best[0], best[1], best[2])?),
        iterations: evals,
        converged,
        final_residual: best_val,
        trace: None,
        flags: Vec::new(),
    })
}
