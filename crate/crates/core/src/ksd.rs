//! Kernel Stein discrepancies with power weights: the RBF Stein kernel, its
//! U-statistic, and bootstrap-calibrated goodness-of-fit tests.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{evaluate, project_tangent, ModelSpec};
use crate::numeric::{dot, median, power_weight, sq_dist};

/// Multiplicative jitter on the median-heuristic `h²`.
pub const BANDWIDTH_JITTER: f64 = 1e-8;

/// Gaussian RBF kernel `exp(-‖x - y‖² / (2h²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { bandwidth })
    }

    /// Median heuristic on `data`.
    pub fn median(data: &Dataset) -> Result<Self> {
        Self::rbf(median_bandwidth(data)?)
    }

    #[inline]
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        (-sq_dist(x, y) / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }

    /// `∇_x K(x, y)`.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let k = self.value(x, y);
        let h2 = self.bandwidth * self.bandwidth;
        x.iter().zip(y).map(|(a, b)| -k * (a - b) / h2).collect()
    }

    /// `∇_y K(x, y)`.
    pub fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.grad_x(y, x)
    }

    /// `tr ∇_x ∇_yᵀ K(x, y)`.
    pub fn trace_mixed(&self, x: &[f64], y: &[f64]) -> f64 {
        let h2 = self.bandwidth * self.bandwidth;
        let r2 = sq_dist(x, y);
        self.value(x, y) * (x.len() as f64 / h2 - r2 / (h2 * h2))
    }
}

/// `h = sqrt(median pairwise squared distance / 2)` with a small jitter, or 1
/// when the median is zero.
pub fn median_bandwidth(data: &Dataset) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument("bandwidth needs at least two points".into()));
    }
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d2.push(sq_dist(data.row(i), data.row(j)));
        }
    }
    let m = median(&d2);
    if !(m > 0.0) {
        return Ok(1.0);
    }
    Ok((0.5 * m * (1.0 + BANDWIDTH_JITTER)).sqrt())
}

/// Per-point quantities entering the Stein kernel.
#[derive(Debug, Clone)]
struct Point {
    x: Vec<f64>,
    /// Euclidean: `(γ+1) s(x)`. Sphere: `(γ+1) ∇_S log u(x) - (d-1) x`.
    a: Vec<f64>,
    weight: f64,
}

fn prepare(q: &ModelSpec, gamma: f64, x: &[f64]) -> Result<(Point, bool)> {
    let e = evaluate(q, x)?;
    let g1 = gamma + 1.0;
    let a = if q.is_spherical() {
        let dm1 = x.len() as f64 - 1.0;
        project_tangent(x, &e.score_x).iter().zip(x).map(|(s, xi)| g1 * s - dm1 * xi).collect()
    } else {
        e.score_x.iter().map(|s| g1 * s).collect()
    };
    let (weight, clamped) = power_weight(e.log_u, gamma);
    Ok((Point { x: x.to_vec(), a, weight }, clamped))
}

fn kernel_from(p: &Point, r: &Point, k: &KernelSpec, spherical: bool) -> f64 {
    let h2 = k.bandwidth * k.bandwidth;
    let d = p.x.len();
    let diff: Vec<f64> = p.x.iter().zip(&r.x).map(|(a, b)| a - b).collect();
    let r2 = dot(&diff, &diff);
    let kv = (-r2 / (2.0 * h2)).exp();
    if !spherical {
        // ∇_y K = K diff / h², ∇_x K = -K diff / h²
        let cross = dot(&p.a, &diff) - dot(&r.a, &diff);
        return kv * (dot(&p.a, &r.a) + cross / h2 + d as f64 / h2 - r2 / (h2 * h2));
    }
    let px = project_tangent(&p.x, &diff);
    let py = project_tangent(&r.x, &diff);
    let cross = dot(&p.a, &py) - dot(&r.a, &px);
    let c = dot(&p.x, &r.x);
    let trace = (d as f64 - 2.0 + c * c) / h2 - dot(&px, &py) / (h2 * h2);
    kv * (dot(&p.a, &r.a) + cross / h2 + trace)
}

/// The Stein kernel `u_{q,K}^{(γ)}(x, y)` without the power weights. For
/// spherical models scores are tangential and kernel derivatives projected.
pub fn stein_kernel(q: &ModelSpec, gamma: f64, k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let (p, _) = prepare(q, gamma, x)?;
    let (r, _) = prepare(q, gamma, y)?;
    Ok(kernel_from(&p, &r, k, q.is_spherical()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsdResult {
    /// U-statistic estimate of the squared discrepancy; may be negative.
    pub statistic: f64,
    pub n: usize,
    pub gamma: f64,
    pub bandwidth_used: f64,
    /// Some power weight hit the exponent clamp.
    pub clamped: bool,
}

/// Rows in lexicographic order so that sums do not depend on input order.
fn canonical_points(data: &Dataset, q: &ModelSpec, gamma: f64) -> Result<(Vec<Point>, bool)> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| {
        data.row(a).iter().zip(data.row(b)).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(a.cmp(&b))
    });
    let mut clamped = false;
    let pts = idx
        .iter()
        .map(|&i| {
            let (p, c) = prepare(q, gamma, data.row(i))?;
            clamped |= c;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pts, clamped))
}

fn check_data(data: &Dataset, q: &ModelSpec) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument("the U-statistic needs at least two points".into()));
    }
    if data.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), got: data.dim() });
    }
    Ok(())
}

/// `(1/(n(n-1))) Σ_{i≠j} u(x_i)^γ u(x_j)^γ u_{q,K}(x_i, x_j)`.
pub fn ksd_ustat(data: &Dataset, q: &ModelSpec, gamma: f64, k: &KernelSpec) -> Result<KsdResult> {
    check_data(data, q)?;
    let (pts, clamped) = canonical_points(data, q, gamma)?;
    let spherical = q.is_spherical();
    let n = pts.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i + 1..n {
            row += pts[j].weight * kernel_from(&pts[i], &pts[j], k, spherical);
        }
        total += pts[i].weight * row;
    }
    let statistic = 2.0 * total / (n as f64 * (n as f64 - 1.0));
    if !statistic.is_finite() {
        return Err(Error::NonFinite { what: "KSD statistic", point: vec![] });
    }
    Ok(KsdResult { statistic, n, gamma, bandwidth_used: k.bandwidth, clamped })
}

/// Weighted Stein kernel matrix `H_ij = w_i w_j u_{q,K}(x_i, x_j)` (row-major,
/// rows in input order).
pub fn stein_gram(data: &Dataset, q: &ModelSpec, gamma: f64, k: &KernelSpec) -> Result<Vec<f64>> {
    check_data(data, q)?;
    let pts: Vec<Point> = data.rows().map(|x| prepare(q, gamma, x).map(|p| p.0)).collect::<Result<_>>()?;
    let n = pts.len();
    let spherical = q.is_spherical();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = pts[i].weight * pts[j].weight * kernel_from(&pts[i], &pts[j], k, spherical);
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
    Ok(h)
}

/// How the null distribution of the statistic is approximated.
pub enum Calibration<'a> {
    /// Draw fresh datasets of the same size from a null sampler.
    NullSimulation(&'a dyn Fn(usize, &mut dyn RngCore) -> Result<Dataset>),
    /// Rademacher multiplier replicates of the off-diagonal Stein Gram sum.
    Multiplier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofTestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub bootstrap_replicates: usize,
    /// `B < 1/α`: the critical value is the sample maximum.
    pub calibration_warning: bool,
}

/// Minimum bootstrap size accepted by [`gof_test`].
pub const MIN_REPLICATES: usize = 100;

/// Null statistics by simulation from `sampler` with a fixed kernel.
pub fn null_statistics<R: Rng>(
    sampler: &dyn Fn(usize, &mut dyn RngCore) -> Result<Dataset>,
    n: usize,
    q: &ModelSpec,
    gamma: f64,
    k: &KernelSpec,
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    (0..replicates).map(|_| Ok(ksd_ustat(&sampler(n, rng)?, q, gamma, k)?.statistic)).collect()
}

/// Multiplier replicates `(1/(n(n-1))) Σ_{i≠j} ε_i ε_j H_ij` with Rademacher `ε`.
pub fn multiplier_statistics<R: Rng>(gram: &[f64], n: usize, replicates: usize, rng: &mut R) -> Vec<f64> {
    let norm = 1.0 / (n as f64 * (n as f64 - 1.0));
    (0..replicates)
        .map(|_| {
            let eps: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let mut total = 0.0;
            for i in 0..n {
                let row: f64 = (i + 1..n).map(|j| eps[j] * gram[i * n + j]).sum();
                total += eps[i] * row;
            }
            2.0 * total * norm
        })
        .collect()
}

/// Decision from a statistic and null replicates: critical value at the
/// empirical `1 - α` quantile, `p = (1 + #{b ≥ stat}) / (B + 1)`.
pub fn decide(statistic: f64, null: &[f64], alpha: f64) -> Result<GofTestResult> {
    if null.is_empty() || !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidArgument("need replicates and α in (0, 1)".into()));
    }
    let b = null.len();
    let mut sorted = null.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = (((1.0 - alpha) * b as f64).ceil() as usize).clamp(1, b) - 1;
    let critical_value = sorted[idx];
    let exceed = null.iter().filter(|v| **v >= statistic).count();
    Ok(GofTestResult {
        statistic,
        critical_value,
        p_value: (1 + exceed) as f64 / (b + 1) as f64,
        reject: statistic > critical_value,
        bootstrap_replicates: b,
        calibration_warning: (b as f64) < 1.0 / alpha,
    })
}

/// Bootstrap goodness-of-fit test of `data` against `q`.
pub fn gof_test<R: Rng>(
    data: &Dataset,
    q: &ModelSpec,
    gamma: f64,
    k: &KernelSpec,
    calibration: &Calibration<'_>,
    replicates: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<GofTestResult> {
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!("at least {MIN_REPLICATES} bootstrap replicates required")));
    }
    let stat = ksd_ustat(data, q, gamma, k)?.statistic;
    let null = match calibration {
        Calibration::NullSimulation(sampler) => null_statistics(*sampler, data.len(), q, gamma, k, replicates, rng)?,
        Calibration::Multiplier => {
            let gram = stein_gram(data, q, gamma, k)?;
            multiplier_statistics(&gram, data.len(), replicates, rng)
        }
    };
    decide(stat, &null, alpha)
}
