//! Model families: log-unnormalized densities, x-scores, sphere calculus and samplers.

mod params;
pub(crate) mod sample;

pub use params::{
    FisherBinghamParams, GaussianParams, MixtureParams, PoissonRegParams, QuarticParams, VmfParams,
};
pub use sample::{sample, sample_vmf, QuarticSampler};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TestField;
use crate::numeric::{dot, log_sum_exp, norm};

/// Largest tolerated `|‖x‖ - 1|` for points handed to spherical families.
pub const SPHERE_TOLERANCE: f64 = 1e-8;

/// One of the supported model families with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    Gaussian(GaussianParams),
    Vmf(VmfParams),
    FisherBingham(FisherBinghamParams),
    Mixture(MixtureParams),
    Quartic(QuarticParams),
    PoissonRegression(PoissonRegParams),
    /// `log u(x) + log_shift`: the same model with a rescaled unnormalized density.
    Shifted { base: Box<ModelSpec>, log_shift: f64 },
}

/// Log-density and ambient x-score at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEval {
    pub log_u: f64,
    pub score_x: Vec<f64>,
    /// Row-major ambient Hessian of `log u` (spherical families only).
    pub ambient_hessian: Option<Vec<f64>>,
}

/// Per-component quantities of a spherical normal mixture at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTerms {
    /// Normalized mixture log-density.
    pub log_p: f64,
    /// Responsibilities `r_j(x)`, summing to one.
    pub resp: Vec<f64>,
    /// Component scores `s_j(x) = -λ_j (x - μ_j)`.
    pub comp_scores: Vec<Vec<f64>>,
    /// Mixture score `s_θ(x) = Σ r_j s_j`.
    pub score: Vec<f64>,
}

impl ModelSpec {
    /// The same model with `log u` shifted by `c` (nested shifts are merged).
    pub fn shifted(&self, c: f64) -> ModelSpec {
        match self {
            ModelSpec::Shifted { base, log_shift } => {
                ModelSpec::Shifted { base: base.clone(), log_shift: log_shift + c }
            }
            other => ModelSpec::Shifted { base: Box::new(other.clone()), log_shift: c },
        }
    }

    /// The model with any shift wrapper removed, and the total shift.
    pub fn unshifted(&self) -> (&ModelSpec, f64) {
        match self {
            ModelSpec::Shifted { base, log_shift } => {
                let (inner, s) = base.unshifted();
                (inner, s + log_shift)
            }
            other => (other, 0.0),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ModelSpec::Gaussian(_) => "gaussian",
            ModelSpec::Vmf(_) => "vmf",
            ModelSpec::FisherBingham(_) => "fisher-bingham",
            ModelSpec::Mixture(_) => "mixture",
            ModelSpec::Quartic(_) => "quartic",
            ModelSpec::PoissonRegression(_) => "poisson-regression",
            ModelSpec::Shifted { base, .. } => base.family_name(),
        }
    }

    /// Dimension of the sample space (ambient for spherical families).
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Gaussian(p) => p.dim(),
            ModelSpec::Vmf(p) => p.dim(),
            ModelSpec::FisherBingham(p) => p.dim(),
            ModelSpec::Mixture(p) => p.dim(),
            ModelSpec::Quartic(_) => 1,
            ModelSpec::PoissonRegression(p) => p.covariates(),
            ModelSpec::Shifted { base, .. } => base.dim(),
        }
    }

    pub fn is_spherical(&self) -> bool {
        matches!(self.unshifted().0, ModelSpec::Vmf(_) | ModelSpec::FisherBingham(_))
    }

    pub fn log_u(&self, x: &[f64]) -> Result<f64> {
        Ok(evaluate(self, x)?.log_u)
    }

    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(evaluate(self, x)?.score_x)
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

/// Rejects points further than [`SPHERE_TOLERANCE`] from the unit sphere.
pub fn check_on_sphere(x: &[f64]) -> Result<()> {
    let deviation = (norm(x) - 1.0).abs();
    if !(deviation <= SPHERE_TOLERANCE) {
        return Err(Error::OffSphere { point: x.to_vec(), deviation });
    }
    Ok(())
}

/// Log-density and ambient score of `model` at `x`.
pub fn evaluate(model: &ModelSpec, x: &[f64]) -> Result<ModelEval> {
    check_dim(model.dim(), x)?;
    let eval = match model {
        ModelSpec::Gaussian(p) => {
            let (log_u, score_x) = p.residual_and_score(x);
            ModelEval { log_u, score_x, ambient_hessian: None }
        }
        ModelSpec::Vmf(p) => {
            check_on_sphere(x)?;
            let d = p.dim();
            ModelEval {
                log_u: p.kappa * dot(&p.mu, x),
                score_x: p.mu.iter().map(|m| p.kappa * m).collect(),
                ambient_hessian: Some(vec![0.0; d * d]),
            }
        }
        ModelSpec::FisherBingham(p) => {
            check_on_sphere(x)?;
            let bx = p.b_times(x);
            ModelEval {
                log_u: dot(&p.xi, x) + dot(x, &bx),
                score_x: p.xi.iter().zip(&bx).map(|(a, b)| a + 2.0 * b).collect(),
                ambient_hessian: Some(p.b.iter().map(|v| 2.0 * v).collect()),
            }
        }
        ModelSpec::Mixture(p) => {
            let t = mixture_terms(p, x);
            ModelEval { log_u: t.log_p, score_x: t.score, ambient_hessian: None }
        }
        ModelSpec::Quartic(p) => {
            ModelEval { log_u: p.log_u(x[0]), score_x: vec![p.score(x[0])], ambient_hessian: None }
        }
        ModelSpec::PoissonRegression(_) => {
            return Err(Error::Unsupported("density evaluation over covariates"))
        }
        ModelSpec::Shifted { base, log_shift } => {
            let mut e = evaluate(base, x)?;
            e.log_u += log_shift;
            e
        }
    };
    if !eval.log_u.is_finite() && eval.log_u != f64::NEG_INFINITY {
        return Err(Error::NonFinite { what: "log-density", point: x.to_vec() });
    }
    if eval.score_x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "score", point: x.to_vec() });
    }
    Ok(eval)
}

/// Responsibilities, component scores and mixture score at `x`.
pub fn mixture_terms(p: &MixtureParams, x: &[f64]) -> MixtureTerms {
    let d = p.dim() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut logs = Vec::with_capacity(p.components());
    let mut comp_scores = Vec::with_capacity(p.components());
    for j in 0..p.components() {
        let lam = p.precisions[j];
        let r: Vec<f64> = x.iter().zip(&p.means[j]).map(|(a, b)| a - b).collect();
        let sq = dot(&r, &r);
        logs.push(p.weights[j].ln() + 0.5 * d * (lam / two_pi).ln() - 0.5 * lam * sq);
        comp_scores.push(r.iter().map(|v| -lam * v).collect::<Vec<f64>>());
    }
    let log_p = log_sum_exp(&logs);
    let resp: Vec<f64> = logs.iter().map(|l| (l - log_p).exp()).collect();
    let mut score = vec![0.0; x.len()];
    for (r, s) in resp.iter().zip(&comp_scores) {
        for (acc, v) in score.iter_mut().zip(s) {
            *acc += r * v;
        }
    }
    MixtureTerms { log_p, resp, comp_scores, score }
}

/// Row-major Hessian of `log u` in ambient coordinates.
pub fn hessian_log(model: &ModelSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(model.dim(), x)?;
    let d = x.len();
    match model {
        ModelSpec::Gaussian(p) => Ok(p.precision.iter().map(|v| -v).collect()),
        ModelSpec::Quartic(p) => Ok(vec![p.score_derivative(x[0])]),
        ModelSpec::Mixture(p) => {
            let t = mixture_terms(p, x);
            let mut h = vec![0.0; d * d];
            for (j, r) in t.resp.iter().enumerate() {
                let s = &t.comp_scores[j];
                for a in 0..d {
                    h[a * d + a] -= r * p.precisions[j];
                    for b in 0..d {
                        h[a * d + b] += r * s[a] * s[b];
                    }
                }
            }
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] -= t.score[a] * t.score[b];
                }
            }
            Ok(h)
        }
        ModelSpec::Vmf(_) | ModelSpec::FisherBingham(_) => Ok(evaluate(model, x)?
            .ambient_hessian
            .expect("spherical families carry a Hessian")),
        ModelSpec::PoissonRegression(_) => Err(Error::Unsupported("density evaluation over covariates")),
        ModelSpec::Shifted { base, .. } => hessian_log(base, x),
    }
}

/// The score `x ↦ ∇ log u(x)` as a test field (divergence `Δ log u`).
pub fn score_field(model: &ModelSpec) -> TestField {
    let d = model.dim();
    let (m1, m2, m3) = (model.clone(), model.clone(), model.clone());
    TestField::new(
        format!("score[{}]", model.family_name()),
        move |x| m1.score(x).unwrap_or_else(|_| vec![f64::NAN; x.len()]),
        move |x| match hessian_log(&m2, x) {
            Ok(h) => (0..d).map(|i| h[i * d + i]).sum(),
            Err(_) => f64::NAN,
        },
    )
    .with_jacobian(move |x| hessian_log(&m3, x).unwrap_or_else(|_| vec![f64::NAN; x.len() * x.len()]))
}

/// Tangential projection `(I - xxᵀ) v`.
pub fn project_tangent(x: &[f64], v: &[f64]) -> Vec<f64> {
    let t = dot(x, v);
    v.iter().zip(x).map(|(a, b)| a - t * b).collect()
}

/// Riemannian gradient of `log u` on the sphere.
pub fn sphere_grad_log(model: &ModelSpec, x: &[f64]) -> Result<Vec<f64>> {
    if !model.is_spherical() {
        return Err(Error::Unsupported("sphere calculus"));
    }
    let e = evaluate(model, x)?;
    Ok(project_tangent(x, &e.score_x))
}

/// Laplace–Beltrami operator of `log u` on the sphere,
/// `tr(P ∇²g P) - (d-1) xᵀ∇g` with `P = I - xxᵀ`.
pub fn sphere_lap_log(model: &ModelSpec, x: &[f64]) -> Result<f64> {
    if !model.is_spherical() {
        return Err(Error::Unsupported("sphere calculus"));
    }
    let e = evaluate(model, x)?;
    let d = x.len();
    let h = e.ambient_hessian.expect("spherical families carry a Hessian");
    // tr(P H P) = tr(H P) = tr H - xᵀHx
    let trace: f64 = (0..d).map(|i| h[i * d + i]).sum();
    let hx: f64 = (0..d).map(|i| x[i] * (0..d).map(|j| h[i * d + j] * x[j]).sum::<f64>()).sum();
    Ok(trace - hx - (d as f64 - 1.0) * dot(x, &e.score_x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_score(model: &ModelSpec, x: &[f64]) -> Vec<f64> {
        crate::numeric::fd_gradient(|y| model.log_u(y).unwrap(), x, 1e-6)
    }

    #[test]
    fn gaussian_mode_has_zero_score() {
        let m = ModelSpec::Gaussian(GaussianParams::standard(2));
        let e = evaluate(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(e.log_u, 0.0);
        assert!(e.score_x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quartic_point_values() {
        let m = ModelSpec::Quartic(QuarticParams::new(0.0, 2.0, -0.5).unwrap());
        let e = evaluate(&m, &[1.0]).unwrap();
        assert!((e.log_u - 1.5).abs() < 1e-15);
        assert!((e.score_x[0] - 2.0).abs() < 1e-15);
        assert!((fd_score(&m, &[1.0])[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_mixture_at_origin() {
        let p = MixtureParams::new(
            vec![0.5, 0.5],
            vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
            vec![1.0 / 0.6, 1.0 / 0.6],
        )
        .unwrap();
        let t = mixture_terms(&p, &[0.0, 0.0]);
        assert!((t.resp[0] - 0.5).abs() < 1e-15);
        assert!(t.score.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn vmf_sphere_calculus() {
        let m = ModelSpec::Vmf(VmfParams::new(vec![1.0, 0.0, 0.0], 10.0).unwrap());
        let g = sphere_grad_log(&m, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(g, vec![10.0, 0.0, 0.0]);
        assert_eq!(sphere_lap_log(&m, &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!(sphere_grad_log(&m, &[1.0, 0.0, 0.0]).unwrap().iter().all(|v| *v == 0.0));
        assert!((sphere_lap_log(&m, &[1.0, 0.0, 0.0]).unwrap() + 20.0).abs() < 1e-12);
        assert!(matches!(evaluate(&m, &[1.1, 0.0, 0.0]), Err(Error::OffSphere { .. })));
    }

    #[test]
    fn fisher_bingham_with_zero_b_nests_vmf() {
        let mu = vec![0.6, 0.0, 0.8];
        let vmf = ModelSpec::Vmf(VmfParams::new(mu.clone(), 3.0).unwrap());
        let fb = ModelSpec::FisherBingham(
            FisherBinghamParams::new(mu.iter().map(|v| 3.0 * v).collect(), vec![0.0; 9]).unwrap(),
        );
        let x = [0.0, 0.6, 0.8];
        assert_eq!(sphere_grad_log(&vmf, &x).unwrap(), sphere_grad_log(&fb, &x).unwrap());
        assert!((sphere_lap_log(&vmf, &x).unwrap() - sphere_lap_log(&fb, &x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn fb_laplacian_matches_closed_form() {
        let b = vec![1.0, 0.5, 0.0, 0.5, -0.3, 0.2, 0.0, 0.2, -0.7];
        let p = FisherBinghamParams::new(vec![0.4, -1.0, 2.0], b).unwrap();
        let x = [0.48, 0.6, 0.64];
        let bx = p.b_times(&x);
        let want = -2.0 * dot(&p.xi, &x) - 6.0 * dot(&x, &bx);
        let m = ModelSpec::FisherBingham(p);
        assert!((sphere_lap_log(&m, &x).unwrap() - want).abs() < 1e-12);
        assert!(dot(&sphere_grad_log(&m, &x).unwrap(), &x).abs() < 1e-10);
    }

    #[test]
    fn hessians_match_differenced_scores() {
        let mix = MixtureParams::new(
            vec![0.3, 0.7],
            vec![vec![-1.0, 0.5], vec![1.5, 0.0]],
            vec![2.0, 0.8],
        )
        .unwrap();
        let models = [
            ModelSpec::Mixture(mix),
            ModelSpec::Gaussian(GaussianParams::new(vec![0.2, -0.1], vec![2.0, 0.3, 0.3, 1.0]).unwrap()),
        ];
        let x = [0.3, -0.4];
        for m in &models {
            let h = hessian_log(m, &x).unwrap();
            for k in 0..2 {
                let col = crate::numeric::fd_gradient(|y| m.score(y).unwrap()[k], &x, 1e-6);
                for j in 0..2 {
                    assert!((col[j] - h[k * 2 + j]).abs() < 1e-6, "{} {k}{j}", m.family_name());
                }
            }
            assert!(score_field(m).consistency_error(&x) < 1e-6);
        }
    }

    #[test]
    fn shift_changes_log_u_only() {
        let m = ModelSpec::Quartic(QuarticParams::new(0.3, 1.0, -0.2).unwrap());
        let s = m.shifted(12.5).shifted(-2.5);
        let (a, b) = (evaluate(&m, &[0.7]).unwrap(), evaluate(&s, &[0.7]).unwrap());
        assert_eq!(a.score_x, b.score_x);
        assert!((b.log_u - a.log_u - 10.0).abs() < 1e-12);
        assert_eq!(s.unshifted().1, 10.0);
    }
}
