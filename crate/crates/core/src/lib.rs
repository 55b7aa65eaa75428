//! Density-power weighted Stein operators and the tools built on them:
//! robust score-matching estimators, kernel Stein goodness-of-fit tests,
//! weighted Stein variational gradient descent and cross-validated choice of
//! the robustness exponent.

pub mod dataset;
pub mod error;
pub mod field;
pub mod models;
pub mod numeric;
pub mod quadrature;
pub mod stein;
pub mod estimators;
pub mod ksd;
pub mod svgd;
pub mod selection;
pub mod scenario;
pub mod metrics;

pub use dataset::{Dataset, Provenance};
pub use error::{Error, Result};
pub use field::TestField;
pub use models::{evaluate, ModelEval, ModelSpec};
pub use quadrature::QuadratureGrid;
