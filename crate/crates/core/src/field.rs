//! Vector fields with analytically supplied divergence (and optionally Jacobian).

use std::fmt;
use std::sync::Arc;

type VectorMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type ScalarMap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A vector field `f: R^d → R^d` together with its divergence `∇·f`.
///
/// The divergence is always provided by the caller. [`TestField::consistency_error`]
/// compares it against central differences but never replaces it.
#[derive(Clone)]
pub struct TestField {
    pub name: String,
    value: VectorMap,
    divergence: ScalarMap,
    /// Row-major `d × d` Jacobian `∂f_i/∂x_j`, needed by transport checks in `d > 1`.
    jacobian: Option<VectorMap>,
}

impl fmt::Debug for TestField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestField")
            .field("name", &self.name)
            .field("has_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl TestField {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        divergence: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), value: Arc::new(value), divergence: Arc::new(divergence), jacobian: None }
    }

    pub fn with_jacobian(mut self, jacobian: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Scalar field `x ↦ g(x)` on the real line, with derivative `g'`.
    pub fn scalar_1d(
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let dg = Arc::new(dg);
        let dg2 = Arc::clone(&dg);
        Self::new(name, move |x| vec![g(x[0])], move |x| dg(x[0])).with_jacobian(move |x| vec![dg2(x[0])])
    }

    /// The identity field `f(x) = x` in `d` dimensions.
    pub fn identity(dim: usize) -> Self {
        Self::new("identity", |x| x.to_vec(), move |_| dim as f64).with_jacobian(move |_| {
            let mut j = vec![0.0; dim * dim];
            for i in 0..dim {
                j[i * dim + i] = 1.0;
            }
            j
        })
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        (self.value)(x)
    }

    pub fn divergence(&self, x: &[f64]) -> f64 {
        (self.divergence)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// `f - c·g` with divergence and Jacobian combined accordingly.
    pub fn minus_scaled(&self, c: f64, other: &TestField) -> TestField {
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        let mut out = TestField::new(
            format!("{} - {c:.6}·{}", self.name, other.name),
            move |x| a.value(x).iter().zip(b.value(x)).map(|(u, v)| u - c * v).collect(),
            move |x| a2.divergence(x) - c * b2.divergence(x),
        );
        if let (Some(ja), Some(jb)) = (self.jacobian.clone(), other.jacobian.clone()) {
            out.jacobian =
                Some(Arc::new(move |x: &[f64]| ja(x).iter().zip(jb(x)).map(|(u, v)| u - c * v).collect()));
        }
        out
    }

    /// Relative disagreement between the supplied divergence and central
    /// differences of the value, at `x`.
    pub fn consistency_error(&self, x: &[f64]) -> f64 {
        let mut probe = x.to_vec();
        let mut fd = 0.0;
        for k in 0..x.len() {
            let h = 1e-5 * (1.0 + x[k].abs());
            probe[k] = x[k] + h;
            let up = self.value(&probe)[k];
            probe[k] = x[k] - h;
            let down = self.value(&probe)[k];
            probe[k] = x[k];
            fd += (up - down) / (2.0 * h);
        }
        let exact = self.divergence(x);
        (fd - exact).abs() / (1.0 + exact.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_field_is_consistent() {
        let f = TestField::identity(3);
        assert_eq!(f.divergence(&[1.0, 2.0, 3.0]), 3.0);
        assert!(f.consistency_error(&[0.3, -1.0, 2.0]) < 1e-8);
    }

    #[test]
    fn wrong_divergence_is_detected() {
        let f = TestField::scalar_1d("bad", |x| x.sin(), |x| x.sin());
        assert!(f.consistency_error(&[0.7]) > 1e-3);
    }
}
