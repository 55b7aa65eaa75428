use serde::{Deserialize, Serialize};

use super::FitResult;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{check_on_sphere, ModelSpec, VmfParams};
use crate::numeric::{dot, norm};

/// Upper clamp for concentration estimates.
pub const KAPPA_MAX: f64 = 1e3;

/// Which concentration equation the fixed point solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VmfEquation {
    /// `(d-1) m₁ = κ (1 - m₂)`, the closed form used by the tabulated study.
    #[default]
    Displayed,
    /// `(d-1) m₁ = (γ+1) κ (1 - m₂)`, from the weighted Stein identity with `g = μᵀx`.
    Unbiased,
}

fn check_sphere_data(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("vMF estimation needs data".into()));
    }
    data.rows().try_for_each(check_on_sphere)
}

/// Weighted resultant and the first two weighted moments of `μᵀx`.
fn weighted_moments(data: &Dataset, w: &[f64], mu: &[f64]) -> (Vec<f64>, f64, f64) {
    let d = data.dim();
    let total: f64 = w.iter().sum();
    let mut r = vec![0.0; d];
    let (mut m1, mut m2) = (0.0, 0.0);
    for (x, wi) in data.rows().zip(w) {
        for k in 0..d {
            r[k] += wi * x[k];
        }
        let t = dot(mu, x);
        m1 += wi * t;
        m2 += wi * t * t;
    }
    r.iter_mut().for_each(|v| *v /= total);
    (r, m1 / total, m2 / total)
}

/// Unweighted starting point: `μ = R/‖R‖`, `κ = (d-1)m₁/(1-m₂)`.
pub fn vmf_moment_init(data: &Dataset) -> Result<VmfParams> {
    check_sphere_data(data)?;
    let w = vec![1.0; data.len()];
    let r = data.mean();
    let rn = norm(&r);
    if rn < 1e-12 {
        return Err(Error::DirectionUndefined(rn));
    }
    let mu: Vec<f64> = r.iter().map(|v| v / rn).collect();
    let (_, m1, m2) = weighted_moments(data, &w, &mu);
    if m2 >= 1.0 - 1e-10 {
        return Err(Error::DegenerateConcentration);
    }
    let kappa = ((data.dim() as f64 - 1.0) * m1 / (1.0 - m2)).clamp(0.0, KAPPA_MAX);
    VmfParams::new(mu, kappa)
}

/// Fixed-point iteration for the vMF γ-estimator with weights `exp(γ κ μᵀx)`.
pub fn vmf_fixed_point(
    data: &Dataset,
    gamma: f64,
    init: &ModelSpec,
    equation: VmfEquation,
    tol: f64,
    max_iter: usize,
) -> Result<FitResult> {
    check_sphere_data(data)?;
    let (base, shift) = init.unshifted();
    let ModelSpec::Vmf(start) = base else {
        return Err(Error::InvalidArgument("vMF fixed point needs a vMF initial model".into()));
    };
    if start.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: start.dim(), got: data.dim() });
    }
    let dm1 = data.dim() as f64 - 1.0;
    let c = match equation {
        VmfEquation::Displayed => 1.0,
        VmfEquation::Unbiased => gamma + 1.0,
    };
    let wrap = |p: VmfParams| {
        let m = ModelSpec::Vmf(p);
        if shift != 0.0 {
            m.shifted(shift)
        } else {
            m
        }
    };
    let (mut mu, mut kappa) = (start.mu.clone(), start.kappa);
    let mut eta = 1.0;
    let mut prev_step = f64::INFINITY;
    let mut rises = 0;
    let mut flags = Vec::new();
    let mut trace = Vec::new();
    for iter in 1..=max_iter {
        let model = wrap(VmfParams { mu: mu.clone(), kappa });
        let logs: Vec<f64> = data.rows().map(|x| model.log_u(x)).collect::<Result<_>>()?;
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| if gamma == 0.0 { 1.0 } else { (gamma * (l - top)).exp() }).collect();
        let (r, m1, m2) = weighted_moments(data, &w, &mu);
        let rn = norm(&r);
        if rn < 1e-12 {
            return Err(Error::DirectionUndefined(rn));
        }
        if m2 >= 1.0 - 1e-10 {
            return Err(Error::DegenerateConcentration);
        }
        let mut new_kappa = dm1 * m1 / (c * (1.0 - m2));
        if !(0.0..=KAPPA_MAX).contains(&new_kappa) {
            flags.push(format!("kappa clamped at iteration {iter}"));
            new_kappa = new_kappa.clamp(0.0, KAPPA_MAX);
        }
        let mut new_mu: Vec<f64> = mu.iter().zip(&r).map(|(a, b)| (1.0 - eta) * a + eta * b / rn).collect();
        let nn = norm(&new_mu);
        new_mu.iter_mut().for_each(|v| *v /= nn);
        new_kappa = (1.0 - eta) * kappa + eta * new_kappa;
        let dmu = norm(&mu.iter().zip(&new_mu).map(|(a, b)| a - b).collect::<Vec<_>>());
        let step = dmu.max((new_kappa - kappa).abs());
        mu = new_mu;
        kappa = new_kappa;
        trace.push(mu.iter().copied().chain(std::iter::once(kappa)).collect());
        if step < tol {
            return Ok(FitResult {
                params: wrap(VmfParams::new(mu, kappa)?),
                iterations: iter,
                converged: true,
                final_residual: step,
                trace: Some(trace),
                flags,
            });
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
    Ok(FitResult {
        params: wrap(VmfParams::new(mu, kappa)?),
        iterations: max_iter,
        converged: false,
        final_residual: prev_step,
        trace: Some(trace),
        flags,
    })
}

/// `I_{ν+1}(κ) / I_ν(κ)` by the Gauss continued fraction (modified Lentz).
pub fn bessel_ratio(nu: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    for k in 1..100_000 {
        let b = 2.0 * (nu + k as f64) / kappa;
        d = b + d;
        if d == 0.0 {
            d = tiny;
        }
        c = b + 1.0 / c;
        if c == 0.0 {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// Maximum-likelihood vMF fit: `μ̂ = R/‖R‖` and `A_d(κ̂) = ‖R‖/n` by safeguarded Newton.
pub fn vmf_mle(data: &Dataset) -> Result<FitResult> {
    check_sphere_data(data)?;
    let d = data.dim() as f64;
    let nu = d / 2.0 - 1.0;
    let r = data.mean();
    let rbar = norm(&r);
    let mu: Vec<f64> = if rbar > 0.0 {
        r.iter().map(|v| v / rbar).collect()
    } else {
        let mut e = vec![0.0; data.dim()];
        e[0] = 1.0;
        e
    };
    let done = |kappa: f64, iterations: usize, converged: bool, residual: f64, flags: Vec<String>| {
        Ok(FitResult {
            params: ModelSpec::Vmf(VmfParams::new(mu.clone(), kappa)?),
            iterations,
            converged,
            final_residual: residual,
            trace: None,
            flags,
        })
    };
    if rbar < 1e-12 {
        return done(0.0, 0, true, 0.0, Vec::new());
    }
    if rbar >= 1.0 - 1e-12 {
        return done(KAPPA_MAX, 0, true, 0.0, vec!["resultant length 1: kappa set to the cap".into()]);
    }
    let a = |k: f64| bessel_ratio(nu, k);
    if a(KAPPA_MAX) <= rbar {
        return done(KAPPA_MAX, 0, true, 0.0, vec!["kappa estimate exceeds the cap".into()]);
    }
    let (mut lo, mut hi) = (0.0, KAPPA_MAX);
    let mut kappa = (rbar * (d - rbar * rbar) / (1.0 - rbar * rbar)).clamp(1e-8, KAPPA_MAX);
    for iter in 1..=200 {
        let ak = a(kappa);
        let g = ak - rbar;
        if g > 0.0 {
            hi = kappa;
        } else {
            lo = kappa;
        }
        let slope = 1.0 - ak * ak - (d - 1.0) * ak / kappa;
        let mut next = kappa - g / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - kappa).abs();
        kappa = next;
        if step <= 1e-12 * (1.0 + kappa) || hi - lo <= 1e-14 * (1.0 + hi) {
            return done(kappa, iter, true, (a(kappa) - rbar).abs(), Vec::new());
        }
    }
    done(kappa, 200, false, (a(kappa) - rbar).abs(), Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_matches_closed_form_in_three_dimensions() {
        for k in [0.01, 0.5, 3.0, 10.0, 80.0, 700.0] {
            let exact = 1.0 / f64::tanh(k) - 1.0 / k;
            assert!((bessel_ratio(0.5, k) - exact).abs() < 1e-12 * (1.0 + exact), "κ = {k}");
        }
    }

    #[test]
    fn mle_concentration_against_bisection() {
        // rows with resultant length exactly 0.8 along e₁
        let s = (1.0f64 - 0.64).sqrt();
        let data = Dataset::from_rows(&[vec![0.8, s, 0.0], vec![0.8, -s, 0.0]]).unwrap();
        let fit = vmf_mle(&data).unwrap();
        let (mut lo, mut hi) = (1e-9, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 / f64::tanh(mid) - 1.0 / mid > 0.8 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let ModelSpec::Vmf(p) = &fit.params else { panic!() };
        assert!((p.kappa - 0.5 * (lo + hi)).abs() < 1e-8);
        assert!((p.mu[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_pairs_give_exact_direction() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let data =
            Dataset::from_rows(&[vec![c, s, 0.0], vec![c, -s, 0.0], vec![c, 0.0, s], vec![c, 0.0, -s]]).unwrap();
        let init = ModelSpec::Vmf(VmfParams::new(vec![0.0, 0.6, 0.8], 1.0).unwrap());
        let fit = vmf_fixed_point(&data, 0.0, &init, VmfEquation::Displayed, 1e-10, 500).unwrap();
        let ModelSpec::Vmf(p) = &fit.params else { panic!() };
        assert_eq!(p.mu, vec![1.0, 0.0, 0.0]);
    }
}
