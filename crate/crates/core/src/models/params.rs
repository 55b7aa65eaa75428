use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm;

fn check_square(values: &[f64], dim: usize, what: &str) -> Result<()> {
    if values.len() != dim * dim {
        return Err(Error::InvalidArgument(format!("{what} must have {dim}×{dim} entries")));
    }
    Ok(())
}

fn check_symmetric(values: &[f64], dim: usize, tol: f64, what: &str) -> Result<()> {
    for i in 0..dim {
        for j in 0..i {
            if (values[i * dim + j] - values[j * dim + i]).abs() > tol {
                return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// Multivariate normal in mean/precision form, `u(x) = exp{-½(x-μ)ᵀΛ(x-μ)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    /// Row-major `d × d` precision matrix.
    pub precision: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, precision: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        check_square(&precision, d, "precision")?;
        check_symmetric(&precision, d, 1e-12, "precision")?;
        if DMatrix::from_row_slice(d, d, &precision).cholesky().is_none() {
            return Err(Error::InvalidArgument("precision is not positive definite".into()));
        }
        Ok(Self { mean, precision })
    }

    /// One-dimensional `N(mean, variance)`.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidArgument("variance must be positive".into()));
        }
        Self::new(vec![mean], vec![1.0 / variance])
    }

    /// `N(mean, variance · I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        let mut p = vec![0.0; d * d];
        for i in 0..d {
            p[i * d + i] = 1.0 / variance;
        }
        Self::new(mean, p)
    }

    pub fn standard(dim: usize) -> Self {
        Self::isotropic(vec![0.0; dim], 1.0).expect("identity precision is valid")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.precision)
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        self.precision_matrix().try_inverse().expect("validated positive definite")
    }

    /// `log ∫ u = (d/2) log 2π - ½ log det Λ`.
    pub fn log_normalizer(&self) -> f64 {
        let d = self.dim() as f64;
        let chol = self.precision_matrix().cholesky().expect("validated positive definite");
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det
    }

    pub(crate) fn residual_and_score(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim();
        let r = DVector::from_iterator(d, x.iter().zip(&self.mean).map(|(a, b)| a - b));
        let lr = self.precision_matrix() * &r;
        let quad = r.dot(&lr);
        (-0.5 * quad, lr.iter().map(|v| -v).collect())
    }
}

/// von Mises–Fisher on `S^{d-1}`, `u(x) = exp{κ μᵀx}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfParams {
    pub mu: Vec<f64>,
    pub kappa: f64,
}

impl VmfParams {
    pub fn new(mu: Vec<f64>, kappa: f64) -> Result<Self> {
        if mu.len() < 2 {
            return Err(Error::InvalidArgument("vMF needs ambient dimension ≥ 2".into()));
        }
        if (norm(&mu) - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument("vMF mean direction must be a unit vector".into()));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidArgument("vMF concentration must be finite and ≥ 0".into()));
        }
        Ok(Self { mu, kappa })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Fisher–Bingham on `S^{d-1}`, `u(x) = exp{ξᵀx + xᵀBx}` with `B` symmetric and traceless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherBinghamParams {
    pub xi: Vec<f64>,
    /// Row-major `d × d`.
    pub b: Vec<f64>,
}

impl FisherBinghamParams {
    pub fn new(xi: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let d = xi.len();
        if d < 2 {
            return Err(Error::InvalidArgument("Fisher–Bingham needs ambient dimension ≥ 2".into()));
        }
        check_square(&b, d, "B")?;
        check_symmetric(&b, d, 1e-12, "B")?;
        let trace: f64 = (0..d).map(|i| b[i * d + i]).sum();
        if trace.abs() >= 1e-10 {
            return Err(Error::InvalidArgument(format!("B must be traceless (trace {trace:e})")));
        }
        Ok(Self { xi, b })
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.b)
    }

    pub(crate) fn b_times(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.b[i * d + j] * x[j]).sum()).collect()
    }
}

/// Spherical normal mixture, component `j` is `N(μ_j, λ_j⁻¹ I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub precisions: Vec<f64>,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, precisions: Vec<f64>) -> Result<Self> {
        let j = weights.len();
        if j == 0 || means.len() != j || precisions.len() != j {
            return Err(Error::InvalidArgument("mixture blocks must have equal, positive length".into()));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidArgument("component means must share one dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument("mixture weights must lie on the simplex".into()));
        }
        if precisions.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument("component precisions must be positive".into()));
        }
        Ok(Self { weights, means, precisions })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.precisions.iter().map(|l| 1.0 / l).collect()
    }

    /// Components reordered by `perm` (`out[k] = self[perm[k]]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: perm.iter().map(|&k| self.weights[k]).collect(),
            means: perm.iter().map(|&k| self.means[k].clone()).collect(),
            precisions: perm.iter().map(|&k| self.precisions[k]).collect(),
        }
    }
}

/// Unnormalized quartic potential `u(x) = exp(θ₁x + θ₂x² + θ₃x⁴)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarticParams {
    pub theta: [f64; 3],
}

impl QuarticParams {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        if !(theta3 < 0.0) {
            return Err(Error::InvalidArgument("quartic coefficient θ₃ must be negative".into()));
        }
        Ok(Self { theta: [theta1, theta2, theta3] })
    }

    /// Same coefficients without the integrability check (estimator iterates).
    pub fn unchecked(theta: [f64; 3]) -> Self {
        Self { theta }
    }

    #[inline]
    pub fn log_u(&self, x: f64) -> f64 {
        let [a, b, c] = self.theta;
        let x2 = x * x;
        a * x + b * x2 + c * x2 * x2
    }

    #[inline]
    pub fn score(&self, x: f64) -> f64 {
        let [a, b, c] = self.theta;
        a + 2.0 * b * x + 4.0 * c * x * x * x
    }

    #[inline]
    pub fn score_derivative(&self, x: f64) -> f64 {
        2.0 * self.theta[1] + 12.0 * self.theta[2] * x * x
    }
}

/// Poisson log-linear regression coefficients (intercept first) with a
/// split-normal prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonRegParams {
    pub alpha: Vec<f64>,
    pub prior_variances: Vec<f64>,
}

impl PoissonRegParams {
    pub fn new(alpha: Vec<f64>, prior_variances: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != prior_variances.len() {
            return Err(Error::InvalidArgument("alpha and prior variances must match in length".into()));
        }
        if prior_variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("prior variances must be positive".into()));
        }
        Ok(Self { alpha, prior_variances })
    }

    /// Intercept variance `intercept_var`, slope variances `slope_var`.
    pub fn split_prior(alpha: Vec<f64>, intercept_var: f64, slope_var: f64) -> Result<Self> {
        let mut v = vec![slope_var; alpha.len()];
        v[0] = intercept_var;
        Self::new(alpha, v)
    }

    pub fn covariates(&self) -> usize {
        self.alpha.len() - 1
    }
}
