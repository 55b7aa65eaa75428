//! γ-weighted Stein operator, Stein identities, γ-Fisher divergence and the
//! first-variation link to the γ-divergence, all by quadrature.

use crate::error::{Error, Result};
use crate::field::TestField;
use crate::models::{evaluate, score_field, ModelSpec};
use crate::numeric::{dot, log_sum_exp, power_weight};
use crate::quadrature::QuadratureGrid;

/// Threshold below which the correction denominator is treated as zero.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// How the power weight `p(x)^γ` is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    /// `u(x)^γ` from the unnormalized density.
    Unnormalized,
    /// `(u(x)/Z)^γ` with the supplied `log Z`.
    Normalized { log_z: f64 },
}

/// Intermediate terms of one operator application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinEvaluation {
    pub gamma: f64,
    pub weight: f64,
    /// `(γ+1)⟨s, f⟩`.
    pub drift_term: f64,
    /// `∇·f`.
    pub divergence_term: f64,
    /// `weight · (drift_term + divergence_term)`.
    pub total: f64,
    /// Set when the weight exponent hit the overflow clamp.
    pub clamped: bool,
}

/// `u(x)^γ {(γ+1)⟨s(x), f(x)⟩ + ∇·f(x)}` with the unnormalized weight.
pub fn apply_gamma_stein(model: &ModelSpec, gamma: f64, field: &TestField, x: &[f64]) -> Result<SteinEvaluation> {
    apply_gamma_stein_with(model, gamma, field, x, WeightMode::Unnormalized)
}

pub fn apply_gamma_stein_with(
    model: &ModelSpec,
    gamma: f64,
    field: &TestField,
    x: &[f64],
    mode: WeightMode,
) -> Result<SteinEvaluation> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be ≥ 0, got {gamma}")));
    }
    let eval = evaluate(model, x)?;
    let f = field.value(x);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "field value", point: x.to_vec() });
    }
    let div = field.divergence(x);
    if !div.is_finite() {
        return Err(Error::NonFinite { what: "field divergence", point: x.to_vec() });
    }
    let log_w = match mode {
        WeightMode::Unnormalized => eval.log_u,
        WeightMode::Normalized { log_z } => eval.log_u - log_z,
    };
    let (weight, clamped) = power_weight(log_w, gamma);
    let drift_term = (gamma + 1.0) * dot(&eval.score_x, &f);
    let total = weight * (drift_term + div);
    Ok(SteinEvaluation { gamma, weight, drift_term, divergence_term: div, total, clamped })
}

/// Classical Langevin–Stein operator `⟨s, f⟩ + ∇·f`.
pub fn classical_stein(model: &ModelSpec, field: &TestField, x: &[f64]) -> Result<f64> {
    let s = evaluate(model, x)?.score_x;
    Ok(dot(&s, &field.value(x)) + field.divergence(x))
}

/// A model tabulated on a grid: normalized log-density and scores per node.
struct Table {
    log_z: f64,
    log_p: Vec<f64>,
    scores: Vec<Vec<f64>>,
}

fn tabulate(model: &ModelSpec, grid: &QuadratureGrid, check_coverage: bool) -> Result<Table> {
    if model.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: model.dim() });
    }
    let mut log_u = Vec::with_capacity(grid.len());
    let mut scores = Vec::with_capacity(grid.len());
    for x in grid.nodes() {
        let e = evaluate(model, x)?;
        log_u.push(e.log_u);
        scores.push(e.score_x);
    }
    let log_z = if check_coverage {
        grid.normalize(&log_u)?.0
    } else {
        let terms: Vec<f64> = log_u.iter().zip(grid.weights()).map(|(l, w)| l + w.ln()).collect();
        log_sum_exp(&terms)
    };
    let log_p = log_u.iter().map(|l| l - log_z).collect();
    Ok(Table { log_z, log_p, scores })
}

/// `|∫ p · 𝒜_p^{(γ)} f|` with `p` normalized on the grid.
pub fn stein_identity_residual(model: &ModelSpec, gamma: f64, field: &TestField, grid: &QuadratureGrid) -> Result<f64> {
    let p = tabulate(model, grid, true)?;
    let mode = WeightMode::Normalized { log_z: p.log_z };
    let mut acc = 0.0;
    for (i, x) in grid.nodes().enumerate() {
        let op = apply_gamma_stein_with(model, gamma, field, x, mode)?;
        acc += grid.weights()[i] * p.log_p[i].exp() * op.total;
    }
    Ok(acc.abs())
}

/// Both sides of the score-difference identity
/// `∫ p 𝒜_q^{(γ)} f = ∫ p q^γ ⟨s_q - s_p, f⟩`.
pub fn mixed_inner_product_check(
    p: &ModelSpec,
    q: &ModelSpec,
    gamma: f64,
    field: &TestField,
    grid: &QuadratureGrid,
) -> Result<(f64, f64)> {
    let tp = tabulate(p, grid, true)?;
    let tq = tabulate(q, grid, false)?;
    let mode = WeightMode::Normalized { log_z: tq.log_z };
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (i, x) in grid.nodes().enumerate() {
        let w = grid.weights()[i] * tp.log_p[i].exp();
        lhs += w * apply_gamma_stein_with(q, gamma, field, x, mode)?.total;
        let gap: Vec<f64> = tq.scores[i].iter().zip(&tp.scores[i]).map(|(a, b)| a - b).collect();
        rhs += w * power_weight(tq.log_p[i], gamma).0 * dot(&gap, &field.value(x));
    }
    Ok((lhs, rhs))
}

/// `E_p[q^γ ‖s_q - s_p‖²]` with both densities normalized on the grid.
pub fn gamma_fisher_divergence(p: &ModelSpec, q: &ModelSpec, gamma: f64, grid: &QuadratureGrid) -> Result<f64> {
    let tp = tabulate(p, grid, true)?;
    let tq = tabulate(q, grid, false)?;
    let mut acc = 0.0;
    for i in 0..grid.len() {
        let gap: f64 = tq.scores[i].iter().zip(&tp.scores[i]).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += grid.weights()[i] * tp.log_p[i].exp() * power_weight(tq.log_p[i], gamma).0 * gap;
    }
    Ok(acc)
}

/// Escort expectations entering the normalizing condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscortMoments {
    /// `E_{q_{γ+1}}⟨s_q, v⟩`.
    pub q_inner: f64,
    /// `E_{p_γ}⟨s_q, v⟩`.
    pub p_inner: f64,
    /// `E_{q_{γ+1}}‖s_q‖²`.
    pub q_norm: f64,
    /// `E_{p_γ}‖s_q‖²`.
    pub p_norm: f64,
}

impl EscortMoments {
    /// Violation of the normalizing condition, `E_{q_{γ+1}}⟨s_q,v⟩ - E_{p_γ}⟨s_q,v⟩`.
    pub fn condition_gap(&self) -> f64 {
        self.q_inner - self.p_inner
    }
}

pub fn escort_moments(
    v: &TestField,
    p: &ModelSpec,
    q: &ModelSpec,
    gamma: f64,
    grid: &QuadratureGrid,
) -> Result<EscortMoments> {
    let tp = tabulate(p, grid, true)?;
    let tq = tabulate(q, grid, false)?;
    // escort weights in log space: p_γ ∝ p q^γ, q_{γ+1} ∝ q^{γ+1}
    let lw: Vec<f64> = grid.weights().iter().map(|w| w.ln()).collect();
    let log_pg: Vec<f64> = (0..grid.len()).map(|i| lw[i] + tp.log_p[i] + gamma * tq.log_p[i]).collect();
    let log_qg: Vec<f64> = (0..grid.len()).map(|i| lw[i] + (gamma + 1.0) * tq.log_p[i]).collect();
    let (zp, zq) = (log_sum_exp(&log_pg), log_sum_exp(&log_qg));
    let mut m = EscortMoments { q_inner: 0.0, p_inner: 0.0, q_norm: 0.0, p_norm: 0.0 };
    for (i, x) in grid.nodes().enumerate() {
        let s = &tq.scores[i];
        let inner = dot(s, &v.value(x));
        let sq = dot(s, s);
        let (a, b) = ((log_pg[i] - zp).exp(), (log_qg[i] - zq).exp());
        m.p_inner += a * inner;
        m.p_norm += a * sq;
        m.q_inner += b * inner;
        m.q_norm += b * sq;
    }
    Ok(m)
}

/// Result of the one-step score-direction correction.
#[derive(Debug, Clone)]
pub struct FieldCorrection {
    pub field: TestField,
    pub c: f64,
    pub denominator: f64,
    /// The denominator vanished and `c = 0` was used.
    pub degenerate: bool,
    /// Degenerate and the condition still fails: the score direction is unidentifiable.
    pub unidentifiable: bool,
}

/// `v° = v - c·s_q` chosen so that `v°` satisfies the normalizing condition.
pub fn correct_field(
    v: &TestField,
    p: &ModelSpec,
    q: &ModelSpec,
    gamma: f64,
    grid: &QuadratureGrid,
) -> Result<FieldCorrection> {
    let m = escort_moments(v, p, q, gamma, grid)?;
    let denominator = m.q_norm - m.p_norm;
    if denominator.abs() < DEGENERATE_DENOMINATOR {
        let unidentifiable = m.condition_gap().abs() > 1e-8;
        return Ok(FieldCorrection { field: v.clone(), c: 0.0, denominator, degenerate: true, unidentifiable });
    }
    let c = m.condition_gap() / denominator;
    let field = v.minus_scaled(c, &score_field(q));
    Ok(FieldCorrection { field, c, denominator, degenerate: false, unidentifiable: false })
}

/// Finite-difference and operator sides of the first-variation identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstVariation {
    /// Richardson extrapolation of the two central differences.
    pub fd_derivative: f64,
    /// Central difference at step `eps`.
    pub fd_coarse: f64,
    /// Central difference at step `eps/2`.
    pub fd_fine: f64,
    /// `C_γ(q) ∫ p 𝒜_q^{(γ)} v`.
    pub operator_side: f64,
}

/// `log q_ε(x) = log q(x - εv(x)) + log det(I - ε∇v(x))`.
fn log_transported(q: &ModelSpec, v: &TestField, eps: f64, x: &[f64]) -> Result<f64> {
    let d = x.len();
    let f = v.value(x);
    let y: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a - eps * b).collect();
    let det = if d == 1 {
        1.0 - eps * v.divergence(x)
    } else {
        let j = v.jacobian(x).ok_or(Error::Unsupported("transport without a field Jacobian"))?;
        let m = nalgebra::DMatrix::from_fn(d, d, |a, b| if a == b { 1.0 } else { 0.0 } - eps * j[a * d + b]);
        m.determinant()
    };
    if !(det > 0.0) {
        return Err(Error::InvalidArgument(format!("transport step {eps} folds the domain")));
    }
    Ok(q.log_u(&y)? + det.ln())
}

/// `D_γ(p‖q)` up to a `q`-independent constant, or `KL(p‖q)` up to one at `γ = 0`.
fn divergence_to(tp: &Table, log_q: &[f64], gamma: f64, grid: &QuadratureGrid) -> f64 {
    let lw: Vec<f64> = grid.weights().iter().map(|w| w.ln()).collect();
    if gamma == 0.0 {
        let log_z = log_sum_exp(&log_q.iter().zip(&lw).map(|(l, w)| l + w).collect::<Vec<_>>());
        return -(0..grid.len()).map(|i| grid.weights()[i] * tp.log_p[i].exp() * (log_q[i] - log_z)).sum::<f64>();
    }
    // ℓ_γ(q) = exp(γ log q - γ/(γ+1) log ∫ q^{γ+1})
    let terms: Vec<f64> = log_q.iter().zip(&lw).map(|(l, w)| (gamma + 1.0) * l + w).collect();
    let log_norm = gamma / (gamma + 1.0) * log_sum_exp(&terms);
    -(0..grid.len())
        .map(|i| grid.weights()[i] * tp.log_p[i].exp() * (gamma * log_q[i] - log_norm).exp())
        .sum::<f64>()
        / gamma
}

pub fn first_variation_check(
    p: &ModelSpec,
    q: &ModelSpec,
    gamma: f64,
    v: &TestField,
    eps: f64,
    grid: &QuadratureGrid,
) -> Result<FirstVariation> {
    if !(1e-4..=1e-2).contains(&eps) {
        return Err(Error::InvalidArgument(format!("finite-difference step {eps} outside [1e-4, 1e-2]")));
    }
    let tp = tabulate(p, grid, true)?;
    let tq = tabulate(q, grid, false)?;
    let div_at = |e: f64| -> Result<f64> {
        let log_q: Vec<f64> = grid.nodes().map(|x| log_transported(q, v, e, x)).collect::<Result<_>>()?;
        Ok(divergence_to(&tp, &log_q, gamma, grid))
    };
    let central = |e: f64| -> Result<f64> { Ok((div_at(e)? - div_at(-e)?) / (2.0 * e)) };
    let fd_coarse = central(eps)?;
    let fd_fine = central(0.5 * eps)?;
    let fd_derivative = (4.0 * fd_fine - fd_coarse) / 3.0;

    let lw: Vec<f64> = grid.weights().iter().map(|w| w.ln()).collect();
    let terms: Vec<f64> = tq.log_p.iter().zip(&lw).map(|(l, w)| (gamma + 1.0) * l + w).collect();
    let c_gamma = (-gamma / (gamma + 1.0) * log_sum_exp(&terms)).exp();
    let mode = WeightMode::Normalized { log_z: tq.log_z };
    let mut expectation = 0.0;
    for (i, x) in grid.nodes().enumerate() {
        expectation += grid.weights()[i] * tp.log_p[i].exp() * apply_gamma_stein_with(q, gamma, v, x, mode)?.total;
    }
    Ok(FirstVariation { fd_derivative, fd_coarse, fd_fine, operator_side: c_gamma * expectation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianParams;

    fn normal(m: f64, v: f64) -> ModelSpec {
        ModelSpec::Gaussian(GaussianParams::scalar(m, v).unwrap())
    }

    #[test]
    fn operator_point_values() {
        let q = normal(0.0, 1.0);
        let f = TestField::identity(1);
        assert_eq!(apply_gamma_stein(&q, 0.0, &f, &[2.0]).unwrap().total, -3.0);
        let at0 = apply_gamma_stein(&q, 1.0, &f, &[0.0]).unwrap();
        assert_eq!((at0.weight, at0.drift_term, at0.divergence_term, at0.total), (1.0, 0.0, 1.0, 1.0));
        let at1 = apply_gamma_stein(&q, 1.0, &f, &[1.0]).unwrap();
        assert!((at1.total - (-0.5f64).exp() * -1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_field_is_an_error() {
        let q = normal(0.0, 1.0);
        let f = TestField::scalar_1d("bad", |_| f64::NAN, |_| 0.0);
        assert!(matches!(apply_gamma_stein(&q, 0.5, &f, &[0.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn identity_case_of_mixed_check() {
        let g = QuadratureGrid::centred_1d(0.0, 10.0).unwrap();
        let q = normal(0.0, 1.0);
        let (l, r) = mixed_inner_product_check(&q, &q, 0.7, &TestField::identity(1), &g).unwrap();
        assert!(l.abs() < 1e-10 && r.abs() < 1e-12);
    }

    #[test]
    fn correction_of_the_score_itself() {
        let g = QuadratureGrid::centred_1d(0.0, 12.0).unwrap();
        let (p, q) = (normal(0.0, 1.0), normal(0.5, 1.0));
        let c = correct_field(&score_field(&q), &p, &q, 0.5, &g).unwrap();
        assert!((c.c - 1.0).abs() < 1e-10);
        assert!(c.field.value(&[0.3])[0].abs() < 1e-10);
        let same = correct_field(&TestField::identity(1), &p, &p, 0.5, &g).unwrap();
        assert!(same.degenerate && same.c == 0.0 && !same.unidentifiable);
    }
}
