use nalgebra::{DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};

use super::{MixtureParams, ModelSpec, QuarticParams, VmfParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{dot, norm, EXP_CLAMP};

/// Proposal budget per draw for rejection samplers.
pub const MAX_PROPOSALS: usize = 1_000_000;

/// Nodes of the quartic inverse-CDF table.
pub const QUARTIC_CDF_NODES: usize = 8001;

/// Draws `n` points from `model`. Shifts of `log u` are ignored.
pub fn sample<R: Rng + ?Sized>(model: &ModelSpec, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    match model.unshifted().0 {
        ModelSpec::Gaussian(p) => {
            let d = p.dim();
            let chol = p.covariance_matrix().cholesky().expect("covariance of a valid precision");
            let l = chol.l();
            let mut values = Vec::with_capacity(n * d);
            for _ in 0..n {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &l * z;
                values.extend(x.iter().zip(&p.mean).map(|(a, m)| a + m));
            }
            Dataset::new(d, values)
        }
        ModelSpec::Mixture(p) => Dataset::new(p.dim(), sample_mixture(p, n, rng)),
        ModelSpec::Vmf(p) => Dataset::new(p.dim(), sample_vmf(p, n, rng)?),
        ModelSpec::FisherBingham(p) => {
            let d = p.dim();
            let lambda_max = SymmetricEigen::new(p.b_matrix()).eigenvalues.max();
            let k = norm(&p.xi);
            let envelope = if k > 0.0 {
                VmfParams { mu: p.xi.iter().map(|v| v / k).collect(), kappa: k }
            } else {
                let mut mu = vec![0.0; d];
                mu[0] = 1.0;
                VmfParams { mu, kappa: 0.0 }
            };
            let mut values = Vec::with_capacity(n * d);
            for _ in 0..n {
                let mut accepted = false;
                for _ in 0..MAX_PROPOSALS {
                    let x = draw_vmf(&envelope, rng)?;
                    let log_ratio = dot(&x, &p.b_times(&x)) - lambda_max;
                    if rng.random::<f64>().ln() <= log_ratio {
                        values.extend(x);
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    return Err(Error::SamplerStuck(MAX_PROPOSALS));
                }
            }
            Dataset::new(d, values)
        }
        ModelSpec::Quartic(p) => {
            let s = QuarticSampler::new(p)?;
            Ok(Dataset::from_scalars(&(0..n).map(|_| s.draw(rng)).collect::<Vec<_>>()))
        }
        ModelSpec::PoissonRegression(p) => {
            let d = p.covariates();
            let mut values = Vec::with_capacity(n * d);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let z = p.alpha[0] + dot(&p.alpha[1..], &x);
                y.push(draw_poisson(z.min(EXP_CLAMP).exp(), rng));
                values.extend(x);
            }
            Dataset::new(d.max(1), if d == 0 { vec![0.0; n] } else { values })?.with_response(y)
        }
        ModelSpec::Shifted { .. } => unreachable!("unshifted() strips wrappers"),
    }
}

/// Poisson draw; zero for non-positive or non-finite rates.
pub(crate) fn draw_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if !(rate > 0.0) {
        return 0;
    }
    match Poisson::new(rate.min(1e15)) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}

fn sample_mixture<R: Rng + ?Sized>(p: &MixtureParams, n: usize, rng: &mut R) -> Vec<f64> {
    let d = p.dim();
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut j = p.components() - 1;
        for (k, w) in p.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                j = k;
                break;
            }
        }
        let sd = 1.0 / p.precisions[j].sqrt();
        for k in 0..d {
            out.push(p.means[j][k] + sd * rng.sample::<f64, _>(StandardNormal));
        }
    }
    out
}

/// `n` vMF draws, row-major, by Wood's tangent-normal rejection scheme.
pub fn sample_vmf<R: Rng + ?Sized>(p: &VmfParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n * p.dim());
    for _ in 0..n {
        out.extend(draw_vmf(p, rng)?);
    }
    Ok(out)
}

fn uniform_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

fn draw_vmf<R: Rng + ?Sized>(p: &VmfParams, rng: &mut R) -> Result<Vec<f64>> {
    let d = p.dim();
    if p.kappa == 0.0 {
        return Ok(uniform_direction(d, rng));
    }
    let dm1 = (d - 1) as f64;
    let kappa = p.kappa;
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for _ in 0..MAX_PROPOSALS {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            // tangent direction orthogonal to mu
            let v = loop {
                let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let t = super::project_tangent(&p.mu, &g);
                let r = norm(&t);
                if r > 1e-12 {
                    break t.into_iter().map(|a| a / r).collect::<Vec<f64>>();
                }
            };
            let s = (1.0 - w * w).max(0.0).sqrt();
            let mut x: Vec<f64> = p.mu.iter().zip(&v).map(|(m, t)| w * m + s * t).collect();
            let r = norm(&x);
            x.iter_mut().for_each(|a| *a /= r);
            return Ok(x);
        }
    }
    Err(Error::SamplerStuck(MAX_PROPOSALS))
}

/// Inverse-CDF sampler for the quartic family, tabulated once per parameter.
#[derive(Debug, Clone)]
pub struct QuarticSampler {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl QuarticSampler {
    pub fn new(p: &QuarticParams) -> Result<Self> {
        if !(p.theta[2] < 0.0) {
            return Err(Error::InvalidArgument("quartic coefficient θ₃ must be negative".into()));
        }
        let (lo, hi) = quartic_support(p);
        let m = QUARTIC_CDF_NODES;
        let step = (hi - lo) / (m - 1) as f64;
        let nodes: Vec<f64> = (0..m).map(|i| lo + i as f64 * step).collect();
        let logs: Vec<f64> = nodes.iter().map(|x| p.log_u(*x)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let mut cdf = Vec::with_capacity(m);
        cdf.push(0.0);
        for i in 1..m {
            let prev = cdf[i - 1];
            cdf.push(prev + 0.5 * step * (dens[i - 1] + dens[i]));
        }
        let total = cdf[m - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { nodes, cdf })
    }

    /// Interval covered by the table.
    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().expect("non-empty table"))
    }

    /// Quantile at probability `u ∈ [0, 1]`, linear between table nodes.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|c| *c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { ((u - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        self.nodes[i - 1] + t * (self.nodes[i] - self.nodes[i - 1])
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random())
    }
}

/// Interval on which `log f_θ` exceeds its maximum minus 40.
pub(crate) fn quartic_support(p: &QuarticParams) -> (f64, f64) {
    let drop = 40.0;
    let mut r: f64 = 1.0;
    loop {
        let probe = 2001;
        let xs: Vec<f64> = (0..probe).map(|i| -r + 2.0 * r * i as f64 / (probe - 1) as f64).collect();
        let top = xs.iter().map(|x| p.log_u(*x)).fold(f64::NEG_INFINITY, f64::max);
        if p.log_u(-r) < top - drop && p.log_u(r) < top - drop {
            let inside: Vec<usize> = (0..probe).filter(|&i| p.log_u(xs[i]) >= top - drop).collect();
            let h = xs[1] - xs[0];
            let lo = xs[*inside.first().expect("maximum is inside")] - h;
            let hi = xs[*inside.last().expect("maximum is inside")] + h;
            return (lo, hi);
        }
        r *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let ds = sample(&ModelSpec::Gaussian(GaussianParams::standard(2)), n, &mut rng).unwrap();
        for m in ds.mean() {
            assert!(m.abs() < 3.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn vmf_resultant_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = VmfParams::new(vec![1.0, 0.0, 0.0], 10.0).unwrap();
        let ds = sample(&ModelSpec::Vmf(p), 100_000, &mut rng).unwrap();
        let m = ds.mean();
        let r = norm(&m);
        assert!((m[0] / r - 1.0).abs() < 0.01 && (m[1] / r).abs() < 0.01);
        // d = 3: E[μᵀx] = coth κ - 1/κ
        let want = 1.0 / 10f64.tanh() - 0.1;
        assert!((m[0] - want).abs() < 3e-3);
        assert!(ds.rows().all(|x| (norm(x) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn quartic_support_is_bounded() {
        let p = QuarticParams::new(0.0, 2.0, -0.5).unwrap();
        let (lo, hi) = quartic_support(&p);
        assert!(lo < -3.0 && hi > 3.0 && lo > -8.0 && hi < 8.0);
        let s = QuarticSampler::new(&p).unwrap();
        assert!((s.quantile(0.5)).abs() < 1e-6);
    }
}
