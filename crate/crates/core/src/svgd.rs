//! Stein variational gradient descent with power-weighted transport, plus the
//! robust Poisson-regression target.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ksd::{median_bandwidth, KernelSpec};
use crate::models::{evaluate, ModelSpec, PoissonRegParams};
use crate::numeric::{clamped_exp, median, softmax_scaled, EXP_CLAMP};

/// Anything with a log-unnormalized density and its gradient.
pub trait Target {
    fn dim(&self) -> usize;
    fn log_u_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Target for ModelSpec {
    fn dim(&self) -> usize {
        ModelSpec::dim(self)
    }
    fn log_u_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = evaluate(self, x)?;
        Ok((e.log_u, e.score_x))
    }
}

/// `log u(α) = Σ_i t_i(α) + log prior`, where `t_i = (exp(a_i) - 1)/γ` with
/// `a_i = γ (y_i z_i - log y_i!) - γ/(γ+1) exp((γ+1) z_i)`, and
/// `t_i = y_i z_i - exp(z_i) - log y_i!` at `γ = 0`. Returns the value,
/// gradient and a clamp flag.
pub fn poisson_gamma_log_target(
    params: &PoissonRegParams,
    covariates: &Dataset,
    y: &[u64],
    gamma: f64,
) -> Result<(f64, Vec<f64>, bool)> {
    let p = params.alpha.len();
    if covariates.dim() + 1 != p {
        return Err(Error::DimensionMismatch { expected: p - 1, got: covariates.dim() });
    }
    if y.len() != covariates.len() {
        return Err(Error::DimensionMismatch { expected: covariates.len(), got: y.len() });
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument("γ must be non-negative".into()));
    }
    let a = &params.alpha;
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    let mut clamped = false;
    for (x, &yi) in covariates.rows().zip(y) {
        let log_fact = ln_factorial(yi);
        let yi = yi as f64;
        let z = a[0] + x.iter().zip(&a[1..]).map(|(u, v)| u * v).sum::<f64>();
        let (term, slope) = if gamma == 0.0 {
            let (ez, c) = clamped_exp(z);
            clamped |= c;
            (yi * z - ez - log_fact, yi - ez)
        } else {
            let g1 = gamma + 1.0;
            let (e1, c1) = clamped_exp(g1 * z);
            let arg = gamma * (yi * z - log_fact) - gamma / g1 * e1;
            let (ea, c2) = clamped_exp(arg);
            clamped |= c1 || c2;
            let t = if arg.abs() <= EXP_CLAMP { arg.exp_m1() / gamma } else { (ea - 1.0) / gamma };
            (t, ea * (yi - e1))
        };
        value += term;
        grad[0] += slope;
        for (g, xk) in grad[1..].iter_mut().zip(x) {
            *g += slope * xk;
        }
    }
    for k in 0..p {
        value -= 0.5 * a[k] * a[k] / params.prior_variances[k];
        grad[k] -= a[k] / params.prior_variances[k];
    }
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { what: "Poisson target", point: a.clone() });
    }
    Ok((value, grad, clamped))
}

/// Which density an SVGD run transports toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// The Bayesian posterior (`γ = 0` loss).
    Posterior,
    /// The posterior induced by the γ-loss.
    GammaLoss,
}

/// Poisson regression target over coefficient vectors.
#[derive(Debug, Clone)]
pub struct PoissonTarget {
    pub covariates: Dataset,
    pub y: Vec<u64>,
    pub prior_variances: Vec<f64>,
    pub kind: TargetKind,
    pub gamma: f64,
}

impl PoissonTarget {
    pub fn new(data: &Dataset, prior_variances: Vec<f64>, gamma: f64) -> Result<Self> {
        let y = data.response.clone().ok_or(Error::InvalidArgument("Poisson target needs counts".into()))?;
        if prior_variances.len() != data.dim() + 1 {
            return Err(Error::DimensionMismatch { expected: data.dim() + 1, got: prior_variances.len() });
        }
        let kind = if gamma == 0.0 { TargetKind::Posterior } else { TargetKind::GammaLoss };
        Ok(Self { covariates: data.clone(), y, prior_variances, kind, gamma })
    }
}

impl Target for PoissonTarget {
    fn dim(&self) -> usize {
        self.covariates.dim() + 1
    }
    fn log_u_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let params = PoissonRegParams { alpha: x.to_vec(), prior_variances: self.prior_variances.clone() };
        let (v, g, _) = poisson_gamma_log_target(&params, &self.covariates, &self.y, self.gamma)?;
        Ok((v, g))
    }
}

/// `M` particles in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub positions: Vec<Vec<f64>>,
    pub step_count: usize,
    /// Seed of the generator that produced the initial positions.
    pub seed: u64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let d = positions.first().map(Vec::len).ok_or(Error::InvalidArgument("need at least one particle".into()))?;
        if positions.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidArgument("particles must share a dimension".into()));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "particle", point: vec![] });
        }
        Ok(Self { positions, step_count: 0, seed })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let m = self.len() as f64;
        let mut out = vec![0.0; self.dim()];
        for p in &self.positions {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v / m;
            }
        }
        out
    }

    fn as_dataset(&self) -> Dataset {
        Dataset::new(self.dim(), self.positions.concat()).expect("rectangular by construction")
    }
}

/// Weights in the transport sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `softmax(γ log u)` over particles.
    #[default]
    Softmax,
    /// `u^γ / M`.
    Unnormalized,
}

fn velocity_core(
    pos: &[Vec<f64>],
    grads: &[Vec<f64>],
    weights: Option<&[f64]>,
    score_factor: f64,
    k: &KernelSpec,
) -> Vec<Vec<f64>> {
    let m = pos.len();
    let d = pos[0].len();
    let h2 = k.bandwidth * k.bandwidth;
    let inv_m = 1.0 / m as f64;
    let mut out = vec![vec![0.0; d]; m];
    for (i, xi) in pos.iter().enumerate() {
        let acc = &mut out[i];
        for (j, xj) in pos.iter().enumerate() {
            let kv = k.value(xj, xi);
            let w = match weights {
                Some(w) => w[j],
                None => 1.0,
            };
            if w == 0.0 {
                continue;
            }
            for c in 0..d {
                // ∇_{x_j} K(x_j, x_i) = -(x_j - x_i) K / h²
                let term = score_factor * kv * grads[j][c] - (xj[c] - xi[c]) * kv / h2;
                acc[c] += w * term;
            }
        }
        if weights.is_none() {
            acc.iter_mut().for_each(|v| *v *= inv_m);
        }
    }
    out
}

fn evaluate_all(target: &dyn Target, pos: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut logs = Vec::with_capacity(pos.len());
    let mut grads = Vec::with_capacity(pos.len());
    for p in pos {
        let (l, g) = target.log_u_grad(p)?;
        logs.push(l);
        grads.push(g);
    }
    Ok((logs, grads))
}

/// Classical velocity `(1/M) Σ_j [K(x_j, x_i) s(x_j) + ∇_{x_j} K(x_j, x_i)]`.
pub fn svgd_velocity(ens: &ParticleEnsemble, target: &dyn Target, k: &KernelSpec) -> Result<Vec<Vec<f64>>> {
    let (_, grads) = evaluate_all(target, &ens.positions)?;
    Ok(velocity_core(&ens.positions, &grads, None, 1.0, k))
}

/// Transport weights for the weighted velocity.
pub fn transport_weights(log_u: &[f64], gamma: f64, scheme: WeightScheme) -> Result<Vec<f64>> {
    match scheme {
        WeightScheme::Softmax => softmax_scaled(log_u, gamma).ok_or(Error::DegenerateWeights),
        WeightScheme::Unnormalized => {
            let m = log_u.len() as f64;
            if gamma != 0.0 && log_u.iter().all(|l| *l == f64::NEG_INFINITY) {
                return Err(Error::DegenerateWeights);
            }
            Ok(log_u.iter().map(|l| crate::numeric::power_weight(*l, gamma).0 / m).collect())
        }
    }
}

fn gamma_velocity_from(
    pos: &[Vec<f64>],
    logs: &[f64],
    grads: &[Vec<f64>],
    gamma: f64,
    scheme: WeightScheme,
    k: &KernelSpec,
) -> Result<Vec<Vec<f64>>> {
    if gamma == 0.0 && scheme == WeightScheme::Softmax {
        return Ok(velocity_core(pos, grads, None, 1.0, k));
    }
    let w = transport_weights(logs, gamma, scheme)?;
    Ok(velocity_core(pos, grads, Some(&w), gamma + 1.0, k))
}

/// Weighted velocity `Σ_j w_j [(γ+1) K(x_j, x_i) s(x_j) + ∇_{x_j} K(x_j, x_i)]`
/// with `w = softmax(γ log u)`.
pub fn gamma_svgd_velocity(
    ens: &ParticleEnsemble,
    target: &dyn Target,
    gamma: f64,
    k: &KernelSpec,
) -> Result<Vec<Vec<f64>>> {
    let (logs, grads) = evaluate_all(target, &ens.positions)?;
    gamma_velocity_from(&ens.positions, &logs, &grads, gamma, WeightScheme::Softmax, k)
}

/// Kernel bandwidth handling across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthPolicy {
    MedianPerIteration,
    Frozen(KernelSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvgdConfig {
    pub iterations: usize,
    pub step: f64,
    pub gamma_target: f64,
    /// Fraction of the iterations over which `γ_t` rises linearly from 0.
    pub anneal_fraction: f64,
    pub rho: f64,
    pub delta: f64,
    pub max_halvings: usize,
    pub projection_radius: Option<f64>,
    pub weights: WeightScheme,
    pub bandwidth: BandwidthPolicy,
}

impl Default for SvgdConfig {
    fn default() -> Self {
        Self {
            iterations: 220,
            step: 0.05,
            gamma_target: 0.0,
            anneal_fraction: 0.6,
            rho: 0.9,
            delta: 1e-6,
            max_halvings: 10,
            projection_radius: None,
            weights: WeightScheme::Softmax,
            bandwidth: BandwidthPolicy::MedianPerIteration,
        }
    }
}

impl SvgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.gamma_target >= 0.0) || !(0.0..=1.0).contains(&self.anneal_fraction) {
            return Err(Error::InvalidArgument("step must be positive, γ non-negative, anneal fraction in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.rho) || !(self.delta > 0.0) {
            return Err(Error::InvalidArgument("preconditioner needs ρ in [0, 1) and δ > 0".into()));
        }
        if matches!(self.projection_radius, Some(r) if !(r > 0.0)) {
            return Err(Error::InvalidArgument("projection radius must be positive".into()));
        }
        Ok(())
    }

    /// `γ_t` for iteration `t` of `T` (`t = 0` is the first update).
    pub fn gamma_at(&self, t: usize) -> f64 {
        let ramp = self.anneal_fraction * self.iterations as f64;
        if self.gamma_target == 0.0 {
            0.0
        } else if ramp <= 0.0 || t as f64 >= ramp {
            self.gamma_target
        } else {
            self.gamma_target * t as f64 / ramp
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvgdTraceRow {
    pub iteration: usize,
    pub gamma: f64,
    pub bandwidth: f64,
    /// Step multiplier after backtracking.
    pub step_scale: f64,
    pub mean_log_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvgdOutcome {
    pub ensemble: ParticleEnsemble,
    pub trace: Vec<SvgdTraceRow>,
    pub flags: Vec<String>,
}

fn project(p: &mut [f64], radius: f64) {
    let n = crate::numeric::norm(p);
    if n > radius {
        p.iter_mut().for_each(|v| *v *= radius / n);
    }
}

/// Runs preconditioned, backtracked SVGD with `γ` annealed per the config.
pub fn run_svgd(config: &SvgdConfig, target: &dyn Target, init: &ParticleEnsemble) -> Result<SvgdOutcome> {
    config.validate()?;
    if init.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: init.dim() });
    }
    let mut ens = init.clone();
    let (m, d) = (ens.len(), ens.dim());
    let mut acc = vec![vec![0.0; d]; m];
    let (mut logs, mut grads) = evaluate_all(target, &ens.positions)?;
    let mut guard = f64::INFINITY;
    let mut trace = Vec::with_capacity(config.iterations);
    let mut flags = Vec::new();
    for t in 0..config.iterations {
        let gamma = config.gamma_at(t);
        let kernel = match config.bandwidth {
            BandwidthPolicy::Frozen(k) => k,
            BandwidthPolicy::MedianPerIteration => {
                KernelSpec::rbf(if m > 1 { median_bandwidth(&ens.as_dataset())? } else { 1.0 })?
            }
        };
        let phi = gamma_velocity_from(&ens.positions, &logs, &grads, gamma, config.weights, &kernel)?;
        let mut dir = vec![vec![0.0; d]; m];
        for i in 0..m {
            for c in 0..d {
                acc[i][c] = config.rho * acc[i][c] + (1.0 - config.rho) * phi[i][c] * phi[i][c];
                dir[i][c] = phi[i][c] / (acc[i][c].sqrt() + config.delta);
            }
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for attempt in 0..=config.max_halvings {
            let mut cand = ens.positions.clone();
            for (p, v) in cand.iter_mut().zip(&dir) {
                for (x, dv) in p.iter_mut().zip(v) {
                    *x += config.step * scale * dv;
                }
                if let Some(r) = config.projection_radius {
                    project(p, r);
                }
            }
            let ok = cand.iter().flatten().all(|v| v.is_finite());
            let eval = if ok { evaluate_all(target, &cand).ok() } else { None };
            match eval {
                Some((l, g)) if l.iter().all(|v| v.is_finite()) => {
                    let worst = l.iter().zip(&logs).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
                    if worst <= guard || attempt == config.max_halvings {
                        if worst > guard {
                            flags.push(format!("backtracking limit reached at iteration {t}"));
                        }
                        accepted = Some((cand, l, g));
                        break;
                    }
                }
                _ => {}
            }
            scale *= 0.5;
        }
        let Some((cand, l, g)) = accepted else {
            return Err(Error::Diverged(t));
        };
        let changes: Vec<f64> = l.iter().zip(&logs).map(|(a, b)| (a - b).abs()).collect();
        let med = median(&changes);
        guard = if med > 0.0 { 10.0 * med } else { f64::INFINITY };
        ens.positions = cand;
        ens.step_count += 1;
        logs = l;
        grads = g;
        trace.push(SvgdTraceRow {
            iteration: t,
            gamma,
            bandwidth: kernel.bandwidth,
            step_scale: scale,
            mean_log_u: logs.iter().sum::<f64>() / m as f64,
        });
    }
    Ok(SvgdOutcome { ensemble: ens, trace, flags })
}
