//! Quadrature checks of the operator identities on fixed models and fields.

use gstein_core::models::{GaussianParams, MixtureParams, QuarticParams};
use gstein_core::stein::{correct_field, first_variation_check, mixed_inner_product_check, stein_identity_residual};
use gstein_core::{ModelSpec, QuadratureGrid, TestField};
use serde::{Deserialize, Serialize};

use super::{Experiment, ExperimentReport, Run};
use crate::config::RunOptions;
use crate::error::CliResult;
use crate::output::{text_table, to_csv_string};

pub const IDENTITY_TOL: f64 = 1e-6;
pub const MIXED_TOL: f64 = 1e-6;
pub const FIRST_VARIATION_TOL: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub group: String,
    pub name: String,
    pub gamma: f64,
    /// Residual, or disagreement between the two sides.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn normal(m: f64, v: f64) -> ModelSpec {
    ModelSpec::Gaussian(GaussianParams::scalar(m, v).expect("positive variance"))
}

fn gauss2(mean: [f64; 2], prec: [f64; 4]) -> ModelSpec {
    ModelSpec::Gaussian(GaussianParams::new(mean.to_vec(), prec.to_vec()).expect("positive-definite precision"))
}

fn quartic(a: f64, b: f64, c: f64) -> ModelSpec {
    ModelSpec::Quartic(QuarticParams::new(a, b, c).expect("negative quartic term"))
}

fn mixture1() -> ModelSpec {
    ModelSpec::Mixture(MixtureParams::new(vec![0.3, 0.7], vec![vec![-1.5], vec![1.0]], vec![1.0, 4.0]).expect("valid"))
}

fn mixture2() -> ModelSpec {
    ModelSpec::Mixture(
        MixtureParams::new(vec![0.4, 0.6], vec![vec![-1.0, 0.0], vec![1.0, 0.5]], vec![2.0, 1.0]).expect("valid"),
    )
}

fn sin() -> TestField {
    TestField::scalar_1d("sin", f64::sin, f64::cos)
}

fn tanh() -> TestField {
    TestField::scalar_1d("tanh", f64::tanh, |x| 1.0 - x.tanh().powi(2))
}

fn cube() -> TestField {
    TestField::scalar_1d("cube", |x| x * x * x, |x| 3.0 * x * x)
}

fn square() -> TestField {
    TestField::scalar_1d("square", |x| x * x, |x| 2.0 * x)
}

fn rotation() -> TestField {
    TestField::new("rotation", |x| vec![x[1], x[0].sin()], |_| 0.0).with_jacobian(|x| vec![0.0, 1.0, x[0].cos(), 0.0])
}

fn shear() -> TestField {
    TestField::new("shear", |x| vec![0.5 * x[1], x[0].sin()], |_| 0.0).with_jacobian(|x| vec![0.0, 0.5, x[0].cos(), 0.0])
}

fn translation() -> TestField {
    TestField::new("translation", |_| vec![1.0], |_| 0.0).with_jacobian(|_| vec![0.0])
}

fn check(group: &str, name: String, gamma: f64, value: f64, tolerance: f64) -> Check {
    Check { group: group.into(), name, gamma, value, tolerance, passed: value < tolerance }
}

/// Runs every identity check. A check that errors is reported as failed with
/// an infinite value.
pub fn identity_suite() -> CliResult<Vec<Check>> {
    let line = QuadratureGrid::centred_1d(0.0, 12.0)?;
    let plane = QuadratureGrid::uniform_2d([-9.0, -9.0], [9.0, 9.0], 301)?;
    let corr = [1.5, 0.4, 0.4, 1.0];
    let mut out = Vec::new();

    let identity: Vec<(&str, ModelSpec, TestField, f64, bool)> = vec![
        ("N(0,1)", normal(0.0, 1.0), TestField::identity(1), 0.0, false),
        ("N(0,1)", normal(0.0, 1.0), sin(), 0.3, false),
        ("N(0,1)", normal(0.0, 1.0), cube(), 1.0, false),
        ("N(0.4,2)", normal(0.4, 2.0), tanh(), 0.5, false),
        ("quartic(0,2,-0.5)", quartic(0.0, 2.0, -0.5), TestField::identity(1), 0.3, false),
        ("quartic(0.5,1,-0.3)", quartic(0.5, 1.0, -0.3), sin(), 0.0, false),
        ("mixture-1d", mixture1(), square(), 0.2, false),
        ("mixture-1d", mixture1(), tanh(), 1.0, false),
        ("N2(0,P)", gauss2([0.0, 0.0], corr), TestField::identity(2), 0.5, true),
        ("N2(1,P)", gauss2([1.0, -0.5], corr), rotation(), 0.0, true),
        ("mixture-2d", mixture2(), rotation(), 0.5, true),
        ("mixture-2d", mixture2(), TestField::identity(2), 0.25, true),
    ];
    for (model, q, f, g, two_d) in identity {
        let grid = if two_d { &plane } else { &line };
        let v = stein_identity_residual(&q, g, &f, grid).unwrap_or(f64::INFINITY);
        out.push(check("stein-identity", format!("{model} / {}", f.name), g, v, IDENTITY_TOL));
    }

    let mixed: Vec<(&str, ModelSpec, ModelSpec, TestField, f64, bool)> = vec![
        ("N(0,1) | N(1,1)", normal(0.0, 1.0), normal(1.0, 1.0), TestField::identity(1), 0.5, false),
        ("N(0,1) | N(0,4)", normal(0.0, 1.0), normal(0.0, 4.0), square(), 1.0, false),
        ("N(0.3,0.8) | quartic", normal(0.3, 0.8), quartic(0.0, 1.0, -0.2), sin(), 0.3, false),
        ("mixture-1d | N(0,2)", mixture1(), normal(0.0, 2.0), tanh(), 0.2, false),
        ("quartic | N(0,1.5)", quartic(0.0, 2.0, -0.5), normal(0.0, 1.5), TestField::identity(1), 0.4, false),
        ("N2(0,I) | mixture-2d", gauss2([0.0, 0.0], [1.0, 0.0, 0.0, 1.0]), mixture2(), rotation(), 0.3, true),
    ];
    for (pair, p, q, f, g, two_d) in mixed {
        let grid = if two_d { &plane } else { &line };
        let v = mixed_inner_product_check(&p, &q, g, &f, grid).map_or(f64::INFINITY, |(l, r)| (l - r).abs());
        out.push(check("mixed-inner-product", format!("{pair} / {}", f.name), g, v, MIXED_TOL));
    }

    let shear_grid = QuadratureGrid::uniform_2d([-8.0, -8.0], [8.0, 8.0], 241)?;
    let variation: Vec<(&str, ModelSpec, ModelSpec, TestField, f64, bool)> = vec![
        ("N(0,1) | N(0.3,1.2)", normal(0.0, 1.0), normal(0.3, 1.2), translation(), 0.3, false),
        ("N(0,1) | N(0.3,1.2)", normal(0.0, 1.0), normal(0.3, 1.2), tanh(), 0.3, false),
        ("N(0,1) | N(0.8,0.7)", normal(0.0, 1.0), normal(0.8, 0.7), TestField::identity(1), 0.5, false),
        ("N2(0,I) | N2(m,P)", gauss2([0.0, 0.0], [1.0, 0.0, 0.0, 1.0]), gauss2([0.3, -0.2], [1.2, 0.2, 0.2, 0.9]), shear(), 0.4, true),
    ];
    for (pair, p, q, f, g, two_d) in variation {
        let grid = if two_d { &shear_grid } else { &line };
        let v = correct_field(&f, &p, &q, g, grid)
            .and_then(|fix| first_variation_check(&p, &q, g, &fix.field, FD_STEP, grid))
            .map_or(f64::INFINITY, |fv| (fv.fd_derivative - fv.operator_side).abs() / (1.0 + fv.operator_side.abs()));
        out.push(check("first-variation", format!("{pair} / corrected {}", f.name), g, v, FIRST_VARIATION_TOL));
    }
    Ok(out)
}

pub fn run(opts: &RunOptions) -> CliResult<(Vec<Check>, ExperimentReport)> {
    let mut run = Run::new(Experiment::VerifyIdentities, opts)?;
    let checks = identity_suite()?;
    run.write("verify_identities.csv", &to_csv_string(&checks)?)?;
    let header: Vec<String> = ["group", "case", "gamma", "value", "tolerance", "status"].iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.group.clone(),
                c.name.clone(),
                format!("{}", c.gamma),
                format!("{:.3e}", c.value),
                format!("{:.0e}", c.tolerance),
                if c.passed { "ok" } else { "FAILED" }.to_string(),
            ]
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    let text = text_table(&header, &body);
    let failures = checks.iter().filter(|c| !c.passed).count();
    let mut report = run.finish(text, serde_json::json!({ "checks": checks.len() }), checks.len(), failures, 0.0)?;
    report.verified = Some(passed);
    Ok((checks, report))
}
