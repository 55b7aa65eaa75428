//! γ-score-matching estimating functions, their solvers, and likelihood baselines.

mod fb;
mod gaussian;
mod nmm;
mod optimize;
mod quartic;
mod vmf;

pub use fb::fisher_bingham_fit;
pub use gaussian::gaussian_fixed_point;
pub use nmm::{
    canonical_order, mixture_log_likelihood, nmm_em_mle, nmm_fit, trimmed_kmeans, HomotopySchedule, NmmInit,
};
pub use optimize::{nelder_mead, solve_moment_norm, NelderMeadOutcome, SolverConfig};
pub use quartic::{quartic_fit, quartic_mle, quartic_score_matching};
pub use vmf::{bessel_ratio, vmf_fixed_point, vmf_mle, vmf_moment_init, VmfEquation, KAPPA_MAX};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{
    mixture_terms, FisherBinghamParams, GaussianParams, MixtureParams, ModelSpec, QuarticParams, VmfParams,
};
use crate::numeric::{dot, norm, power_weight, EXP_CLAMP};
use crate::quadrature::QuadratureGrid;

/// Default parameter-step tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 500;

/// Which estimating function a family uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Gaussian { dim: usize },
    Vmf { dim: usize, equation: VmfEquation },
    FisherBingham { dim: usize },
    Mixture { components: usize, dim: usize },
    Quartic,
}

/// A model family with a parameter-vector encoding, plus an optional constant
/// added to every `log u` (a change of normalizer that estimators must ignore).
///
/// Encodings:
/// - Gaussian: `(μ, Λ_ab for a ≤ b)`
/// - vMF: `(μ, κ)`
/// - Fisher–Bingham: `(ξ, B_jk for j ≤ k except B_dd)` with `B_dd = -Σ_{k<d} B_kk`
/// - mixture: `(logits 2..J, means, log λ)` with the first logit fixed at 0
/// - quartic: `(θ₁, θ₂, θ₃)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub kind: FamilyKind,
    pub log_shift: f64,
}

/// Stacked estimating-equation components with a label per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub values: Vec<f64>,
    pub block_index: Vec<String>,
    /// Some `u^γ` weight hit the exponent clamp.
    pub clamped: bool,
}

impl MomentVector {
    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// Output of every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelSpec,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm or last parameter step, whichever the solver monitors.
    pub final_residual: f64,
    pub trace: Option<Vec<Vec<f64>>>,
    /// Diagnostic notes (regularization applied, clamping, floors).
    pub flags: Vec<String>,
}

/// Fits `family` at exponent `gamma` with its default solver: fixed points for
/// Gaussian and vMF, the polytope solver for Fisher–Bingham and quartic, and a
/// homotopy over γ = 0, γ/3, 2γ/3, γ from trimmed k-means for mixtures.
/// `init` overrides the data-driven starting point.
pub fn fit_gamma(
    family: &Family,
    data: &Dataset,
    gamma: f64,
    init: Option<&ModelSpec>,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be non-negative, got {gamma}")));
    }
    let shift = |m: ModelSpec| if family.log_shift != 0.0 { m.shifted(family.log_shift) } else { m };
    match family.kind {
        FamilyKind::Gaussian { .. } => {
            let start = match init {
                Some(m) => m.clone(),
                None => shift(ModelSpec::Gaussian(gaussian_moments(data)?)),
            };
            gaussian_fixed_point(data, gamma, &start, cfg.tol, DEFAULT_MAX_ITER)
        }
        FamilyKind::Vmf { equation, .. } => {
            let start = match init {
                Some(m) => m.clone(),
                None => shift(ModelSpec::Vmf(vmf_moment_init(data)?)),
            };
            vmf_fixed_point(data, gamma, &start, equation, cfg.tol, DEFAULT_MAX_ITER)
        }
        FamilyKind::FisherBingham { .. } => {
            let theta = init.map(|m| family.theta(m)).transpose()?;
            let fit = fisher_bingham_fit(data, gamma, theta.as_deref(), cfg)?;
            Ok(FitResult { params: shift(fit.params.unshifted().0.clone()), ..fit })
        }
        FamilyKind::Quartic => {
            let theta = match init {
                Some(m) => {
                    let t = family.theta(m)?;
                    Some([t[0], t[1], t[2]])
                }
                None => None,
            };
            let fit = quartic_fit(data, gamma, theta, cfg)?;
            Ok(FitResult { params: shift(fit.params.unshifted().0.clone()), ..fit })
        }
        FamilyKind::Mixture { .. } => {
            let start = match init {
                Some(m) => match m.unshifted().0 {
                    ModelSpec::Mixture(p) => NmmInit::Given(p.clone()),
                    _ => return Err(Error::InvalidArgument("mixture fit needs a mixture initial model".into())),
                },
                None => NmmInit::TrimmedKMeans { trim: 0.1, seed: cfg.seed },
            };
            let schedule = HomotopySchedule::linear(gamma, 3, 20)?;
            nmm_fit(family, data, &schedule, &start, cfg)
        }
    }
}

/// Sample mean and inverse sample covariance.
fn gaussian_moments(data: &Dataset) -> Result<GaussianParams> {
    let d = data.dim();
    let n = data.len();
    if n <= d {
        return Err(Error::InvalidArgument("need more observations than dimensions".into()));
    }
    let mean = data.mean();
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for x in data.rows() {
        let r = nalgebra::DVector::from_iterator(d, x.iter().zip(&mean).map(|(a, b)| a - b));
        cov += &r * r.transpose();
    }
    cov /= n as f64;
    let prec = cov
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("sample covariance is singular".into()))?;
    GaussianParams::new(mean, prec.as_slice().to_vec())
}

/// Model-specific data prepared once per parameter vector.
pub(crate) enum Prepared {
    Gaussian(GaussianParams),
    Vmf { mu: Vec<f64>, kappa: f64, equation: VmfEquation },
    FisherBingham(FisherBinghamParams),
    Mixture(MixtureParams),
    Quartic(QuarticParams),
}

impl Family {
    pub fn new(kind: FamilyKind) -> Self {
        Self { kind, log_shift: 0.0 }
    }
    pub fn gaussian(dim: usize) -> Self {
        Self::new(FamilyKind::Gaussian { dim })
    }
    pub fn vmf(dim: usize) -> Self {
        Self::new(FamilyKind::Vmf { dim, equation: VmfEquation::Displayed })
    }
    pub fn fisher_bingham(dim: usize) -> Self {
        Self::new(FamilyKind::FisherBingham { dim })
    }
    pub fn mixture(components: usize, dim: usize) -> Self {
        Self::new(FamilyKind::Mixture { components, dim })
    }
    pub fn quartic() -> Self {
        Self::new(FamilyKind::Quartic)
    }

    pub fn with_log_shift(mut self, c: f64) -> Self {
        self.log_shift = c;
        self
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            FamilyKind::Gaussian { dim }
            | FamilyKind::Vmf { dim, .. }
            | FamilyKind::FisherBingham { dim }
            | FamilyKind::Mixture { dim, .. } => dim,
            FamilyKind::Quartic => 1,
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            FamilyKind::Gaussian { dim } => dim + dim * (dim + 1) / 2,
            FamilyKind::Vmf { dim, .. } => dim + 1,
            FamilyKind::FisherBingham { dim } => dim + dim * (dim + 1) / 2 - 1,
            FamilyKind::Mixture { components, dim } => components - 1 + components * dim + components,
            FamilyKind::Quartic => 3,
        }
    }

    pub fn equation_count(&self) -> usize {
        match self.kind {
            FamilyKind::Gaussian { dim } => dim + dim * (dim + 1) / 2,
            FamilyKind::Vmf { dim, .. } => dim + 1,
            FamilyKind::FisherBingham { dim } => dim + dim * (dim + 1) / 2,
            FamilyKind::Mixture { components, dim } => components * (dim + 2),
            FamilyKind::Quartic => 3,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self.kind {
            FamilyKind::Gaussian { dim } => {
                let mut v: Vec<String> = (0..dim).map(|k| format!("mu[{k}]")).collect();
                for a in 0..dim {
                    for b in a..dim {
                        v.push(format!("precision[{a},{b}]"));
                    }
                }
                v
            }
            FamilyKind::Vmf { dim, .. } => {
                let mut v: Vec<String> = (0..dim).map(|k| format!("direction[{k}]")).collect();
                v.push("kappa".into());
                v
            }
            FamilyKind::FisherBingham { dim } => {
                let mut v: Vec<String> = (0..dim).map(|k| format!("xi[{k}]")).collect();
                for j in 0..dim {
                    for k in j..dim {
                        v.push(format!("B[{j},{k}]"));
                    }
                }
                v
            }
            FamilyKind::Mixture { components, dim } => {
                let mut v: Vec<String> = (0..components).map(|j| format!("pi[{j}]")).collect();
                for j in 0..components {
                    for k in 0..dim {
                        v.push(format!("mu[{j}][{k}]"));
                    }
                }
                v.extend((0..components).map(|j| format!("precision[{j}]")));
                v
            }
            FamilyKind::Quartic => vec!["theta1".into(), "theta2".into(), "theta3".into()],
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "parameter", point: theta.to_vec() });
        }
        Ok(())
    }

    pub(crate) fn prepare(&self, theta: &[f64]) -> Result<Prepared> {
        self.check_theta(theta)?;
        Ok(match self.kind {
            FamilyKind::Gaussian { dim } => {
                let mut p = vec![0.0; dim * dim];
                let mut idx = dim;
                for a in 0..dim {
                    for b in a..dim {
                        p[a * dim + b] = theta[idx];
                        p[b * dim + a] = theta[idx];
                        idx += 1;
                    }
                }
                // positive definiteness is only needed to build a model, not to evaluate U
                Prepared::Gaussian(GaussianParams { mean: theta[..dim].to_vec(), precision: p })
            }
            FamilyKind::Vmf { dim, equation } => {
                let r = norm(&theta[..dim]);
                if !(r > 0.0) {
                    return Err(Error::DirectionUndefined(r));
                }
                Prepared::Vmf { mu: theta[..dim].iter().map(|v| v / r).collect(), kappa: theta[dim], equation }
            }
            FamilyKind::FisherBingham { dim } => {
                let xi = theta[..dim].to_vec();
                let mut b = vec![0.0; dim * dim];
                let mut idx = dim;
                for j in 0..dim {
                    for k in j..dim {
                        if j == dim - 1 && k == dim - 1 {
                            continue;
                        }
                        b[j * dim + k] = theta[idx];
                        b[k * dim + j] = theta[idx];
                        idx += 1;
                    }
                }
                b[dim * dim - 1] = -(0..dim - 1).map(|k| b[k * dim + k]).sum::<f64>();
                Prepared::FisherBingham(FisherBinghamParams { xi, b })
            }
            FamilyKind::Mixture { components, dim } => {
                let mut logits = vec![0.0; components];
                logits[1..].copy_from_slice(&theta[..components - 1]);
                let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = e.iter().sum();
                let weights: Vec<f64> = e.iter().map(|v| v / total).collect();
                let off = components - 1;
                let means = (0..components).map(|j| theta[off + j * dim..off + (j + 1) * dim].to_vec()).collect();
                let precisions: Vec<f64> =
                    theta[off + components * dim..].iter().map(|l| l.clamp(-EXP_CLAMP, EXP_CLAMP).exp()).collect();
                Prepared::Mixture(MixtureParams { weights, means, precisions })
            }
            FamilyKind::Quartic => Prepared::Quartic(QuarticParams::unchecked([theta[0], theta[1], theta[2]])),
        })
    }

    /// The model described by `theta`, validated.
    pub fn model(&self, theta: &[f64]) -> Result<ModelSpec> {
        let base = match self.prepare(theta)? {
            Prepared::Gaussian(p) => ModelSpec::Gaussian(GaussianParams::new(p.mean, p.precision)?),
            Prepared::Vmf { mu, kappa, .. } => ModelSpec::Vmf(VmfParams::new(mu, kappa)?),
            Prepared::FisherBingham(p) => ModelSpec::FisherBingham(FisherBinghamParams::new(p.xi, p.b)?),
            Prepared::Mixture(p) => ModelSpec::Mixture(MixtureParams::new(p.weights, p.means, p.precisions)?),
            Prepared::Quartic(p) => ModelSpec::Quartic(QuarticParams::new(p.theta[0], p.theta[1], p.theta[2])?),
        };
        Ok(if self.log_shift != 0.0 { base.shifted(self.log_shift) } else { base })
    }

    /// Parameter vector of a model of this family.
    pub fn theta(&self, model: &ModelSpec) -> Result<Vec<f64>> {
        let mismatch = || Error::InvalidArgument(format!("{} is not a {:?} model", model.family_name(), self.kind));
        let m = model.unshifted().0;
        let theta = match (self.kind, m) {
            (FamilyKind::Gaussian { dim }, ModelSpec::Gaussian(p)) if p.dim() == dim => {
                let mut v = p.mean.clone();
                for a in 0..dim {
                    for b in a..dim {
                        v.push(p.precision[a * dim + b]);
                    }
                }
                v
            }
            (FamilyKind::Vmf { dim, .. }, ModelSpec::Vmf(p)) if p.dim() == dim => {
                let mut v = p.mu.clone();
                v.push(p.kappa);
                v
            }
            (FamilyKind::FisherBingham { dim }, ModelSpec::FisherBingham(p)) if p.dim() == dim => {
                let mut v = p.xi.clone();
                for j in 0..dim {
                    for k in j..dim {
                        if !(j == dim - 1 && k == dim - 1) {
                            v.push(p.b[j * dim + k]);
                        }
                    }
                }
                v
            }
            (FamilyKind::Mixture { components, dim }, ModelSpec::Mixture(p))
                if p.components() == components && p.dim() == dim =>
            {
                let l0 = p.weights[0].max(1e-300).ln();
                let mut v: Vec<f64> = p.weights[1..].iter().map(|w| w.max(1e-300).ln() - l0).collect();
                for mu in &p.means {
                    v.extend_from_slice(mu);
                }
                v.extend(p.precisions.iter().map(|l| l.ln()));
                v
            }
            (FamilyKind::Quartic, ModelSpec::Quartic(p)) => p.theta.to_vec(),
            _ => return Err(mismatch()),
        };
        Ok(theta)
    }

    /// `log u(x)` (with the family shift) and the unweighted estimating function
    /// `U(θ, x) / u(x)^γ` at one point.
    pub(crate) fn point_terms(&self, prep: &Prepared, x: &[f64], gamma: f64, out: &mut Vec<f64>) -> f64 {
        out.clear();
        let g1 = gamma + 1.0;
        let log_u = match prep {
            Prepared::Gaussian(p) => {
                let d = p.dim();
                let (log_u, s) = p.residual_and_score(x);
                let r: Vec<f64> = x.iter().zip(&p.mean).map(|(a, b)| a - b).collect();
                for k in 0..d {
                    let ls: f64 = (0..d).map(|a| p.precision[k * d + a] * s[a]).sum();
                    out.push(g1 * ls);
                }
                for a in 0..d {
                    for b in a..d {
                        if a == b {
                            out.push(-g1 * s[a] * r[a] - 1.0);
                        } else {
                            out.push(-g1 * (s[a] * r[b] + s[b] * r[a]));
                        }
                    }
                }
                log_u
            }
            Prepared::Quartic(p) => {
                let x = x[0];
                let s = p.score(x);
                out.push(g1 * s);
                out.push(g1 * s * 2.0 * x + 2.0);
                out.push(g1 * s * 4.0 * x * x * x + 12.0 * x * x);
                p.log_u(x)
            }
            Prepared::Vmf { mu, kappa, equation } => {
                let d = mu.len();
                let t = dot(mu, x);
                out.extend(x.iter().zip(mu).map(|(a, m)| a - t * m));
                let c = match equation {
                    VmfEquation::Displayed => 1.0,
                    VmfEquation::Unbiased => g1,
                };
                out.push((d as f64 - 1.0) * t - c * kappa * (1.0 - t * t));
                kappa * t
            }
            Prepared::FisherBingham(p) => {
                let d = p.dim();
                let bx = p.b_times(x);
                let lin = dot(&p.xi, x) + 2.0 * dot(x, &bx);
                let dm1 = d as f64 - 1.0;
                for i in 0..d {
                    out.push(-dm1 * x[i] + g1 * (p.xi[i] + 2.0 * bx[i] - x[i] * lin));
                }
                for j in 0..d {
                    for k in j..d {
                        let delta = if j == k { 2.0 } else { 0.0 };
                        let inner = x[j] * p.xi[k] + x[k] * p.xi[j] + 2.0 * (x[j] * bx[k] + x[k] * bx[j])
                            - 2.0 * x[j] * x[k] * lin;
                        out.push(delta - 2.0 * d as f64 * x[j] * x[k] + g1 * inner);
                    }
                }
                dot(&p.xi, x) + dot(x, &bx)
            }
            Prepared::Mixture(p) => {
                let t = mixture_terms(p, x);
                let d = p.dim() as f64;
                for j in 0..p.components() {
                    out.push(g1 * dot(&t.score, &t.comp_scores[j]) - d * p.precisions[j]);
                }
                for j in 0..p.components() {
                    for k in 0..p.dim() {
                        out.push(t.resp[j] * (gamma * t.score[k] + t.comp_scores[j][k]));
                    }
                }
                for j in 0..p.components() {
                    let inner: f64 = (0..p.dim())
                        .map(|k| (t.comp_scores[j][k] + gamma * t.score[k]) * (p.means[j][k] - x[k]))
                        .sum();
                    out.push(t.resp[j] * (inner - d));
                }
                t.log_p
            }
        };
        log_u + self.log_shift
    }

    fn per_point(&self, theta: &[f64], data: &Dataset, gamma: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("estimating equations need data".into()));
        }
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: data.dim() });
        }
        let prep = self.prepare(theta)?;
        let mut logs = Vec::with_capacity(data.len());
        let mut terms = Vec::with_capacity(data.len());
        let mut buf = Vec::with_capacity(self.equation_count());
        for x in data.rows() {
            logs.push(self.point_terms(&prep, x, gamma, &mut buf));
            terms.push(buf.clone());
        }
        Ok((logs, terms))
    }
}

/// `(1/n) Σ u_θ(x_i)^γ U(θ, x_i)` with the raw power weight.
pub fn estimating_mean(family: &Family, theta: &[f64], data: &Dataset, gamma: f64) -> Result<MomentVector> {
    let (logs, terms) = family.per_point(theta, data, gamma)?;
    let mut values = vec![0.0; family.equation_count()];
    let mut clamped = false;
    for (l, t) in logs.iter().zip(&terms) {
        let (w, c) = power_weight(*l, gamma);
        clamped |= c;
        for (acc, v) in values.iter_mut().zip(t) {
            *acc += w * v;
        }
    }
    let n = data.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "estimating equation", point: theta.to_vec() });
    }
    Ok(MomentVector { values, block_index: family.labels(), clamped })
}

/// Per-point estimating functions `u(x_i)^γ U(θ, x_i)`, one row per observation.
pub fn estimating_terms(family: &Family, theta: &[f64], data: &Dataset, gamma: f64) -> Result<Vec<Vec<f64>>> {
    let (logs, mut terms) = family.per_point(theta, data, gamma)?;
    for (l, t) in logs.iter().zip(terms.iter_mut()) {
        let w = power_weight(*l, gamma).0;
        t.iter_mut().for_each(|v| *v *= w);
    }
    Ok(terms)
}

/// Self-normalized mean `Σ w_i U_i / Σ w_i` with `w_i = exp(γ(ℓ_i - max ℓ))`.
///
/// Same zero set as [`estimating_mean`]; used as the solver objective so that
/// driving every weight to zero is not a spurious minimizer.
pub fn weighted_mean(family: &Family, theta: &[f64], data: &Dataset, gamma: f64) -> Result<Vec<f64>> {
    // A constant shift of log u cancels in the ratio; dropping it keeps the
    // weights bitwise identical across shifts.
    let unshifted = Family { log_shift: 0.0, ..*family };
    let (logs, terms) = unshifted.per_point(theta, data, gamma)?;
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::NonFinite { what: "log-density", point: theta.to_vec() });
    }
    let mut values = vec![0.0; family.equation_count()];
    let mut total = 0.0;
    for (l, t) in logs.iter().zip(&terms) {
        let w = if gamma == 0.0 { 1.0 } else { (gamma * (l - top)).exp() };
        total += w;
        for (acc, v) in values.iter_mut().zip(t) {
            *acc += w * v;
        }
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(values)
}

fn jacobian_of(f: impl Fn(&[f64]) -> Result<Vec<f64>>, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut probe = theta.to_vec();
    let mut cols = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        let h = 1e-5 * (1.0 + theta[k].abs());
        probe[k] = theta[k] + h;
        let up = f(&probe)?;
        probe[k] = theta[k] - h;
        let down = f(&probe)?;
        probe[k] = theta[k];
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    // rows = equations, columns = parameters
    let m = cols.first().map_or(0, Vec::len);
    Ok((0..m).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
}

fn asymmetry(j: &[Vec<f64>]) -> Result<f64> {
    let n = j.len();
    if j.iter().any(|r| r.len() != n) {
        return Err(Error::Unsupported("symmetry diagnostic of a non-square system"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..n {
        for b in 0..n {
            num += (j[a][b] - j[b][a]).powi(2);
            den += j[a][b] * j[a][b];
        }
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Finite-difference Jacobian of the empirical estimating equation (rows are
/// equations, columns parameters).
pub fn empirical_jacobian(family: &Family, theta: &[f64], data: &Dataset, gamma: f64) -> Result<Vec<Vec<f64>>> {
    jacobian_of(|t| Ok(estimating_mean(family, t, data, gamma)?.values), theta)
}

/// `‖J - Jᵀ‖_F / ‖J‖_F` for the empirical Jacobian; square systems only.
pub fn jacobian_symmetry_diagnostic(family: &Family, theta: &[f64], data: &Dataset, gamma: f64) -> Result<f64> {
    asymmetry(&empirical_jacobian(family, theta, data, gamma)?)
}

/// Population Jacobian `E_{p_θ}[∂_θ U]` by quadrature, for one-dimensional families.
pub fn population_jacobian(family: &Family, theta: &[f64], gamma: f64, grid: &QuadratureGrid) -> Result<Vec<Vec<f64>>> {
    if family.dim() != 1 || grid.dim() != 1 {
        return Err(Error::Unsupported("population Jacobian beyond one dimension"));
    }
    let model = family.model(theta)?;
    let log_u: Vec<f64> = grid.nodes().map(|x| model.log_u(x)).collect::<Result<_>>()?;
    let (_, density) = grid.normalize(&log_u)?;
    let masses: Vec<f64> = density.iter().zip(grid.weights()).map(|(p, w)| p * w).collect();
    let nodes: Vec<f64> = grid.nodes().map(|x| x[0]).collect();
    let expect = |t: &[f64]| -> Result<Vec<f64>> {
        let prep = family.prepare(t)?;
        let mut acc = vec![0.0; family.equation_count()];
        let mut buf = Vec::new();
        for (x, m) in nodes.iter().zip(&masses) {
            let l = family.point_terms(&prep, &[*x], gamma, &mut buf);
            let w = power_weight(l, gamma).0;
            for (a, v) in acc.iter_mut().zip(&buf) {
                *a += m * w * v;
            }
        }
        Ok(acc)
    };
    jacobian_of(expect, theta)
}

/// Symmetric part's eigenvalues of a square matrix given by rows.
pub fn symmetric_eigenvalues(j: &[Vec<f64>]) -> Vec<f64> {
    let n = j.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |a, b| 0.5 * (j[a][b] + j[b][a]));
    m.symmetric_eigenvalues().iter().copied().collect()
}
