use nalgebra::DMatrix;

use super::FitResult;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{GaussianParams, ModelSpec};

/// Weighted-moment fixed point for the Gaussian γ-estimator:
/// `μ ← Σw x / Σw`, `Σ ← (γ+1) Σw (x-μ)(x-μ)ᵀ / Σw`, `w = u^γ`.
///
/// `init` may carry a log-density shift; it cancels from the weights and is
/// carried over to the result.
pub fn gaussian_fixed_point(
    data: &Dataset,
    gamma: f64,
    init: &ModelSpec,
    tol: f64,
    max_iter: usize,
) -> Result<FitResult> {
    let (base, shift) = init.unshifted();
    let ModelSpec::Gaussian(start) = base else {
        return Err(Error::InvalidArgument("Gaussian fixed point needs a Gaussian initial model".into()));
    };
    let d = start.dim();
    if data.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: data.dim() });
    }
    if data.len() <= d {
        return Err(Error::InvalidArgument("need more observations than dimensions".into()));
    }
    let wrap = |p: GaussianParams| {
        let m = ModelSpec::Gaussian(p);
        if shift != 0.0 {
            m.shifted(shift)
        } else {
            m
        }
    };
    let mut mean = start.mean.clone();
    let mut cov = start.covariance_matrix();
    let mut model = init.clone();
    let mut eta = 1.0;
    let mut prev_step = f64::INFINITY;
    let mut rises = 0;
    let mut flags = Vec::new();
    let mut trace = Vec::new();
    for iter in 1..=max_iter {
        let logs: Vec<f64> = data.rows().map(|x| model.log_u(x)).collect::<Result<_>>()?;
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| if gamma == 0.0 { 1.0 } else { (gamma * (l - top)).exp() }).collect();
        let total: f64 = w.iter().sum();
        let mut new_mean = vec![0.0; d];
        for (x, wi) in data.rows().zip(&w) {
            for k in 0..d {
                new_mean[k] += wi * x[k];
            }
        }
        new_mean.iter_mut().for_each(|v| *v /= total);
        let mut new_cov = DMatrix::<f64>::zeros(d, d);
        for (x, wi) in data.rows().zip(&w) {
            for a in 0..d {
                for b in 0..d {
                    new_cov[(a, b)] += wi * (x[a] - new_mean[a]) * (x[b] - new_mean[b]);
                }
            }
        }
        new_cov *= (gamma + 1.0) / total;
        for k in 0..d {
            new_mean[k] = (1.0 - eta) * mean[k] + eta * new_mean[k];
        }
        let new_cov = &cov * (1.0 - eta) + new_cov * eta;
        let step = mean
            .iter()
            .zip(&new_mean)
            .map(|(a, b)| (a - b).abs())
            .chain(cov.iter().zip(new_cov.iter()).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        mean = new_mean;
        cov = new_cov;
        let precision = match cov.clone().try_inverse().filter(|p| p.clone().cholesky().is_some()) {
            Some(p) => p,
            None => {
                flags.push(format!("regularized singular covariance at iteration {iter}"));
                cov += DMatrix::<f64>::identity(d, d) * 1e-8;
                cov.clone().try_inverse().ok_or(Error::InvalidArgument("covariance stayed singular".into()))?
            }
        };
        let sym: Vec<f64> = (0..d * d).map(|i| 0.5 * (precision[(i / d, i % d)] + precision[(i % d, i / d)])).collect();
        let params = GaussianParams::new(mean.clone(), sym)?;
        trace.push(mean.iter().copied().chain(cov.iter().copied()).collect());
        model = wrap(params);
        if step < tol {
            return Ok(FitResult { params: model, iterations: iter, converged: true, final_residual: step, trace: Some(trace), flags });
        }
        if step > prev_step {
            rises += 1;
            if rises >= 2 && eta > 1.0 / 64.0 {
                eta *= 0.5;
                rises = 0;
                flags.push(format!("damping halved to {eta} at iteration {iter}"));
            }
        } else {
            rises = 0;
        }
        prev_step = step;
    }
    Ok(FitResult { params: model, iterations: max_iter, converged: false, final_residual: prev_step, trace: Some(trace), flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn as_gaussian(m: &ModelSpec) -> &GaussianParams {
        match m.unshifted().0 {
            ModelSpec::Gaussian(p) => p,
            _ => panic!("not Gaussian"),
        }
    }

    #[test]
    fn symmetric_pair_at_gamma_one() {
        let data = Dataset::from_scalars(&[-1.0, 1.0]);
        let init = ModelSpec::Gaussian(GaussianParams::scalar(0.0, 1.0).unwrap());
        let fit = gaussian_fixed_point(&data, 1.0, &init, 1e-12, 500).unwrap();
        let p = as_gaussian(&fit.params);
        assert!(fit.converged);
        assert!(p.mean[0].abs() < 1e-12);
        assert!((1.0 / p.precision[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_zero_is_one_step_moments() {
        let xs = [0.3, -1.2, 2.5, 0.9, -0.4];
        let data = Dataset::from_scalars(&xs);
        let init = ModelSpec::Gaussian(GaussianParams::scalar(5.0, 3.0).unwrap());
        let fit = gaussian_fixed_point(&data, 0.0, &init, 1e-12, 10).unwrap();
        let m = xs.iter().sum::<f64>() / 5.0;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 5.0;
        let first = &fit.trace.as_ref().unwrap()[0];
        assert!((first[0] - m).abs() < 1e-15 && (first[1] - v).abs() < 1e-14);
        assert!(fit.iterations <= 2);
    }
}
