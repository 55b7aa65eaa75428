use gstein_core::models::{score_field, GaussianParams, MixtureParams};
use gstein_core::stein::*;
use gstein_core::{ModelSpec, QuadratureGrid, TestField};

fn normal(m: f64, v: f64) -> ModelSpec {
    ModelSpec::Gaussian(GaussianParams::scalar(m, v).unwrap())
}

fn grid(half: f64) -> QuadratureGrid {
    QuadratureGrid::centred_1d(0.0, half).unwrap()
}

#[test]
fn stein_identity_examples() {
    let q = normal(0.0, 1.0);
    let coarse = QuadratureGrid::uniform_1d(-10.0, 10.0, 2001).unwrap();
    assert!(stein_identity_residual(&q, 0.0, &TestField::identity(1), &coarse).unwrap() < 1e-8);
    let sin = TestField::scalar_1d("sin", f64::sin, f64::cos);
    assert!(stein_identity_residual(&q, 0.3, &sin, &grid(10.0)).unwrap() < 1e-6);
    let cube = TestField::scalar_1d("cube", |x| x * x * x, |x| 3.0 * x * x);
    assert!(stein_identity_residual(&q, 1.0, &cube, &grid(10.0)).unwrap() < 1e-6);
}

#[test]
fn stein_identity_holds_in_two_dimensions() {
    let p = MixtureParams::new(vec![0.4, 0.6], vec![vec![-1.0, 0.0], vec![1.0, 0.5]], vec![2.0, 1.0]).unwrap();
    let q = ModelSpec::Mixture(p);
    let g = QuadratureGrid::uniform_2d([-9.0, -9.0], [9.0, 9.0], 301).unwrap();
    let f = TestField::new("rot", |x| vec![x[1], x[0].sin()], |_| 0.0);
    assert!(stein_identity_residual(&q, 0.5, &f, &g).unwrap() < 1e-6);
}

#[test]
fn score_difference_identity_examples() {
    let (l, r) = mixed_inner_product_check(&normal(0.0, 1.0), &normal(1.0, 1.0), 0.5, &TestField::identity(1), &grid(12.0))
        .unwrap();
    assert!((l - r).abs() < 1e-6 * (1.0 + l.abs()) && l.abs() > 1e-3);
    let sq = TestField::scalar_1d("square", |x| x * x, |x| 2.0 * x);
    let (l, r) = mixed_inner_product_check(&normal(0.0, 1.0), &normal(0.0, 4.0), 1.0, &sq, &grid(12.0)).unwrap();
    assert!((l - r).abs() < 1e-6 * (1.0 + l.abs()));
}

#[test]
fn gamma_fisher_divergence_examples() {
    let g = grid(12.0);
    let p = normal(0.0, 1.0);
    assert!(gamma_fisher_divergence(&p, &p, 0.4, &g).unwrap().abs() < 1e-14);
    let d0 = gamma_fisher_divergence(&p, &normal(0.7, 1.0), 0.0, &g).unwrap();
    assert!((d0 - 0.49).abs() < 1e-10);
    // E_p[φ(X-1)] = φ_{√2}(1)
    let oracle = (-0.25f64).exp() / (4.0 * std::f64::consts::PI).sqrt();
    let d1 = gamma_fisher_divergence(&p, &normal(1.0, 1.0), 1.0, &g).unwrap();
    assert!((d1 - oracle).abs() < 1e-8, "{d1} vs {oracle}");
}

#[test]
fn corrected_field_satisfies_condition() {
    let g = grid(12.0);
    let (p, q) = (normal(0.0, 1.0), normal(0.5, 1.0));
    let fix = correct_field(&TestField::identity(1), &p, &q, 0.5, &g).unwrap();
    assert!(!fix.degenerate && fix.c.abs() > 1e-6);
    let after = escort_moments(&fix.field, &p, &q, 0.5, &g).unwrap();
    assert!(after.condition_gap().abs() < 1e-8);
}

#[test]
fn first_variation_examples() {
    let g = grid(12.0);
    let p = normal(0.0, 1.0);
    let q = normal(0.3, 1.2);
    let translation = TestField::new("translation", |_| vec![1.0], |_| 0.0);

    let same = correct_field(&translation, &p, &p, 0.3, &g).unwrap();
    let fv = first_variation_check(&p, &p, 0.3, &same.field, 1e-3, &g).unwrap();
    assert!(fv.fd_derivative.abs() < 1e-6 && fv.operator_side.abs() < 1e-6);

    let fix = correct_field(&translation, &p, &q, 0.3, &g).unwrap();
    let fv = first_variation_check(&p, &q, 0.3, &fix.field, 1e-3, &g).unwrap();
    assert!((fv.fd_derivative - fv.operator_side).abs() < 1e-3 * (1.0 + fv.operator_side.abs()), "{fv:?}");

    let bump = TestField::scalar_1d("tanh", f64::tanh, |x| 1.0 - x.tanh().powi(2));
    let fix = correct_field(&bump, &p, &q, 0.3, &g).unwrap();
    let fv = first_variation_check(&p, &q, 0.3, &fix.field, 1e-3, &g).unwrap();
    assert!((fv.fd_derivative - fv.operator_side).abs() < 1e-3 * (1.0 + fv.operator_side.abs()), "{fv:?}");
    assert!(fv.operator_side.abs() > 1e-3, "{fv:?}");

    // γ = 0: KL first variation E_p[𝒜_q v] = ⟨s_q - s_p, v⟩_{L²(p)}
    let v = TestField::scalar_1d("tanh", f64::tanh, |x| 1.0 - x.tanh().powi(2));
    let fv = first_variation_check(&p, &q, 0.0, &v, 1e-3, &g).unwrap();
    let direct = g.integrate(|x| {
        let (sp, sq) = (-x[0], -(x[0] - 0.3) / 1.2);
        (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt() * (sq - sp) * x[0].tanh()
    });
    assert!((fv.fd_derivative - direct).abs() < 1e-6 && (fv.operator_side - direct).abs() < 1e-8);
}

#[test]
fn uncorrected_field_breaks_first_variation() {
    let g = grid(12.0);
    let (p, q) = (normal(0.0, 1.0), normal(0.8, 0.7));
    let v = TestField::identity(1);
    let fv = first_variation_check(&p, &q, 0.5, &v, 1e-3, &g).unwrap();
    assert!((fv.fd_derivative - fv.operator_side).abs() > 1e-2);
}

#[test]
fn first_variation_in_two_dimensions() {
    let g = QuadratureGrid::uniform_2d([-8.0, -8.0], [8.0, 8.0], 241).unwrap();
    let p = ModelSpec::Gaussian(GaussianParams::standard(2));
    let q = ModelSpec::Gaussian(GaussianParams::new(vec![0.3, -0.2], vec![1.2, 0.2, 0.2, 0.9]).unwrap());
    let v = TestField::new("shear", |x| vec![0.5 * x[1], x[0].sin()], |_| 0.0)
        .with_jacobian(|x| vec![0.0, 0.5, x[0].cos(), 0.0]);
    let fix = correct_field(&v, &p, &q, 0.4, &g).unwrap();
    let fv = first_variation_check(&p, &q, 0.4, &fix.field, 1e-3, &g).unwrap();
    assert!((fv.fd_derivative - fv.operator_side).abs() < 1e-3 * (1.0 + fv.operator_side.abs()), "{fv:?}");
}

#[test]
fn gamma_zero_matches_classical_operator_bitwise() {
    let q = normal(0.4, 2.0);
    let f = TestField::scalar_1d("sin", f64::sin, f64::cos);
    for x in [-3.0, -0.2, 0.0, 1.7, 5.5] {
        let e = apply_gamma_stein(&q, 0.0, &f, &[x]).unwrap();
        assert_eq!(e.total.to_bits(), classical_stein(&q, &f, &[x]).unwrap().to_bits());
    }
}

#[test]
fn alternative_divergence_form() {
    // 𝒜 f = ∇·(u^{γ+1} f) / u, by central differences of u^{γ+1} f
    let q = normal(0.2, 1.5);
    let f = TestField::scalar_1d("poly", |x| x * x - 0.5 * x, |x| 2.0 * x - 0.5);
    for gamma in [0.0, 0.3, 1.0] {
        for x in [-1.3, 0.1, 0.9, 2.2] {
            let g = |y: f64| (gamma + 1.0) * q.log_u(&[y]).unwrap();
            let h = 1e-5;
            let flux = |y: f64| g(y).exp() * f.value(&[y])[0];
            let fd = (flux(x + h) - flux(x - h)) / (2.0 * h) / q.log_u(&[x]).unwrap().exp();
            let op = apply_gamma_stein(&q, gamma, &f, &[x]).unwrap().total;
            assert!((fd - op).abs() < 1e-4 * (1.0 + op.abs()));
        }
    }
}

#[test]
fn score_field_is_a_valid_test_field() {
    let q = normal(0.5, 1.0);
    assert!(score_field(&q).consistency_error(&[0.3]) < 1e-6);
}
