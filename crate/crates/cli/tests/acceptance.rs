//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,4` restricts the run to the listed criteria.
//! `ACCEPTANCE_STRICT=1` makes any FAIL exit nonzero; by default the run only
//! reports, so a criterion that cannot be met does not mask the others.

use std::time::Instant;

use gstein_cli::experiments::{cv, nmm, power, quartic, svgd, verify, vmf};
use gstein_cli::RunOptions;
use gstein_core::estimators::{
    estimating_terms, fit_gamma, jacobian_symmetry_diagnostic, Family, FamilyKind, SolverConfig, VmfEquation,
};
use gstein_core::ksd::{gof_test, ksd_ustat, Calibration, KernelSpec};
use gstein_core::models::{
    evaluate, sample, FisherBinghamParams, GaussianParams, MixtureParams, PoissonRegParams, QuarticParams, VmfParams,
};
use gstein_core::numeric::{mean, sample_sd};
use gstein_core::stein::apply_gamma_stein;
use gstein_core::svgd::{gamma_svgd_velocity, run_svgd, svgd_velocity, ParticleEnsemble, PoissonTarget, SvgdConfig, Target};
use gstein_core::{Dataset, ModelSpec, TestField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vec(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

fn opts(dir: &std::path::Path) -> RunOptions {
    RunOptions { seed: SEED, out: dir.to_path_buf(), desk: true, plots: false, ..RunOptions::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn runtime(start: Instant, limit_s: f64) -> (bool, String) {
    let s = start.elapsed().as_secs_f64();
    (s < limit_s, format!("runtime {s:.1}s (limit {limit_s:.0}s)"))
}

// ---- 1 -------------------------------------------------------------------

fn identities() -> Outcome {
    let start = Instant::now();
    let checks = verify::identity_suite().expect("suite runs");
    let count = |g: &str| checks.iter().filter(|c| c.group == g).count();
    let passed = |g: &str| checks.iter().filter(|c| c.group == g && c.passed).count();
    let worst = |g: &str| checks.iter().filter(|c| c.group == g).map(|c| c.value).fold(0.0, f64::max);
    let (rt_ok, rt) = runtime(start, 30.0);
    let pass = count("stein-identity") == 12
        && count("mixed-inner-product") == 6
        && count("first-variation") == 4
        && checks.iter().all(|c| c.passed)
        && rt_ok;
    Outcome {
        pass,
        detail: format!(
            "identity {}/12 (max {:.1e}), mixed {}/6 (max {:.1e}), first-variation {}/4 (max {:.1e}); {rt}",
            passed("stein-identity"),
            worst("stein-identity"),
            passed("mixed-inner-product"),
            worst("mixed-inner-product"),
            passed("first-variation"),
            worst("first-variation"),
        ),
    }
}

// ---- 2 -------------------------------------------------------------------

/// Full-covariance Gaussian score `-P(x - m)`, coded from scratch.
fn gauss_score(mean: &[f64], prec: &[f64], x: &[f64]) -> Vec<f64> {
    let d = mean.len();
    (0..d).map(|i| -(0..d).map(|j| prec[i * d + j] * (x[j] - mean[j])).sum::<f64>()).collect()
}

fn random_gaussian(r: &mut ChaCha8Rng, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mean = normal_vec(r, d);
    // P = AAᵀ + I
    let a: Vec<f64> = normal_vec(r, d * d);
    let mut prec = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            prec[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
        }
    }
    (mean, prec)
}

fn rbf(x: &[f64], y: &[f64], h: f64) -> f64 {
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (-r2 / (2.0 * h * h)).exp()
}

/// Classical KSD U-statistic with an RBF kernel, written directly from the
/// Stein kernel `sᵀs k + sₓᵀ∇_y k + s_yᵀ∇ₓ k + tr ∇ₓ∇_y k`.
fn classical_ksd(xs: &[Vec<f64>], score: &dyn Fn(&[f64]) -> Vec<f64>, h: f64) -> f64 {
    let n = xs.len();
    let d = xs[0].len();
    let s: Vec<Vec<f64>> = xs.iter().map(|x| score(x)).collect();
    let h2 = h * h;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (x, y) = (&xs[i], &xs[j]);
            let k = rbf(x, y, h);
            let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let r2: f64 = diff.iter().map(|v| v * v).sum();
            let ss: f64 = s[i].iter().zip(&s[j]).map(|(a, b)| a * b).sum();
            let sx_gy: f64 = s[i].iter().zip(&diff).map(|(a, b)| a * b * k / h2).sum();
            let sy_gx: f64 = s[j].iter().zip(&diff).map(|(a, b)| -a * b * k / h2).sum();
            let tr = k * (d as f64 / h2 - r2 / (h2 * h2));
            total += ss * k + sx_gy + sy_gx + tr;
        }
    }
    total / (n as f64 * (n as f64 - 1.0))
}

/// Classical SVGD direction `(1/M) Σ_j [k(x_j, x_i) s(x_j) + ∇_{x_j} k(x_j, x_i)]`.
fn classical_velocity(xs: &[Vec<f64>], score: &dyn Fn(&[f64]) -> Vec<f64>, h: f64) -> Vec<Vec<f64>> {
    let m = xs.len();
    xs.iter()
        .map(|xi| {
            let mut v = vec![0.0; xi.len()];
            for xj in xs {
                let k = rbf(xj, xi, h);
                let s = score(xj);
                for c in 0..v.len() {
                    v[c] += k * s[c] - (xj[c] - xi[c]) * k / (h * h);
                }
            }
            v.iter().map(|a| a / m as f64).collect()
        })
        .collect()
}

fn reductions() -> Outcome {
    let mut r = rng(2);
    let (mut op_err, mut ksd_err, mut vel_err, mut pois_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for trial in 0..20 {
        let d = 1 + trial % 3;
        let (m, p) = random_gaussian(&mut r, d);
        let model = ModelSpec::Gaussian(GaussianParams::new(m.clone(), p.clone()).unwrap());
        let score = |x: &[f64]| gauss_score(&m, &p, x);

        // operator with f(x) = sin(x) componentwise, ∇·f = Σ cos(x_k)
        let field = TestField::new("sin", |x| x.iter().map(|v| v.sin()).collect(), |x| x.iter().map(|v| v.cos()).sum());
        for _ in 0..10 {
            let x = normal_vec(&mut r, d);
            let s = score(&x);
            let want: f64 = s.iter().zip(&x).map(|(a, b)| a * b.sin()).sum::<f64>() + x.iter().map(|v| v.cos()).sum::<f64>();
            op_err = op_err.max(rel(apply_gamma_stein(&model, 0.0, &field, &x).unwrap().total, want));
        }

        let xs: Vec<Vec<f64>> = (0..40).map(|_| normal_vec(&mut r, d).iter().map(|v| 1.5 * v).collect()).collect();
        let h = 0.5 + r.random::<f64>();
        let k = KernelSpec::rbf(h).unwrap();
        let data = Dataset::from_rows(&xs).unwrap();
        ksd_err = ksd_err.max(rel(ksd_ustat(&data, &model, 0.0, &k).unwrap().statistic, classical_ksd(&xs, &score, h)));

        let ens = ParticleEnsemble::new(xs[..20].to_vec(), 0).unwrap();
        let want = classical_velocity(&ens.positions, &score, h);
        for got in [svgd_velocity(&ens, &model, &k).unwrap(), gamma_svgd_velocity(&ens, &model, 0.0, &k).unwrap()] {
            for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
                vel_err = vel_err.max(rel(*a, *b));
            }
        }
    }

    // γ = 0 Poisson target is the log posterior: Σ (y - e^z) x̃ - α/σ²
    let params = PoissonRegParams::split_prior(vec![0.5, 0.3, -0.2], 100.0, 1.0).unwrap();
    let data = sample(&ModelSpec::PoissonRegression(params.clone()), 200, &mut r).unwrap();
    let target = PoissonTarget::new(&data, params.prior_variances.clone(), 0.0).unwrap();
    let y = data.response.clone().unwrap();
    for _ in 0..10 {
        let a: Vec<f64> = normal_vec(&mut r, 3).iter().map(|v| 0.3 * v).collect();
        let mut want: Vec<f64> = a.iter().zip(&params.prior_variances).map(|(ai, v)| -ai / v).collect();
        for (x, &yi) in data.rows().zip(&y) {
            let z = a[0] + a[1] * x[0] + a[2] * x[1];
            let resid = yi as f64 - z.exp();
            want[0] += resid;
            want[1] += resid * x[0];
            want[2] += resid * x[1];
        }
        let (_, got) = target.log_u_grad(&a).unwrap();
        for (g, w) in got.iter().zip(&want) {
            pois_err = pois_err.max(rel(*g, *w));
        }
    }
    let tol = 1e-12;
    Outcome {
        pass: op_err < tol && ksd_err < tol && vel_err < tol && pois_err < tol,
        detail: format!(
            "max rel error: operator {op_err:.1e}, KSD {ksd_err:.1e}, SVGD velocity {vel_err:.1e}, Poisson gradient {pois_err:.1e} (tol {tol:.0e})"
        ),
    }
}

// ---- 3 -------------------------------------------------------------------

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / (1.0 + x.abs())).fold(0.0, f64::max)
}

fn normalizer_invariance() -> Outcome {
    const SHIFTS: [f64; 5] = [-50.0, -12.25, 3.5, 27.0, 50.0];
    const TOL: f64 = 1e-12;
    let cfg = SolverConfig::default();
    let mut est_err = 0.0f64;
    let mut notes = Vec::new();

    let gauss = ModelSpec::Gaussian(GaussianParams::new(vec![0.5, -0.3], vec![1.5, 0.3, 0.3, 0.8]).unwrap());
    let vmf = ModelSpec::Vmf(VmfParams::new(vec![0.0, 0.6, 0.8], 5.0).unwrap());
    let fb = ModelSpec::FisherBingham(
        FisherBinghamParams::new(vec![2.0, 0.0, 1.0], vec![1.0, 0.3, 0.0, 0.3, -0.5, 0.0, 0.0, 0.0, -0.5]).unwrap(),
    );
    let quart = ModelSpec::Quartic(QuarticParams::new(0.0, 2.0, -0.5).unwrap());
    let mix = ModelSpec::Mixture(
        MixtureParams::new(vec![0.5, 0.5], vec![vec![-2.0, 0.0], vec![2.0, 0.0]], vec![1.5, 1.5]).unwrap(),
    );
    let cases: Vec<(&str, Family, ModelSpec, usize, f64)> = vec![
        ("gaussian", Family::gaussian(2), gauss, 300, 0.3),
        ("vmf", Family::vmf(3), vmf, 300, 0.2),
        ("fisher-bingham", Family::fisher_bingham(3), fb, 300, 0.2),
        ("quartic", Family::quartic(), quart, 300, 0.3),
        ("mixture", Family::mixture(2, 2), mix, 300, 0.3),
    ];
    for (i, (name, fam, truth, n, g)) in cases.iter().enumerate() {
        let data = sample(truth, *n, &mut rng(30 + i as u64)).unwrap();
        let Ok(base) = fit_gamma(fam, &data, *g, None, &cfg) else {
            notes.push(format!("{name}: base fit failed"));
            est_err = f64::INFINITY;
            continue;
        };
        let theta0 = fam.theta(base.params.unshifted().0).unwrap();
        for c in SHIFTS {
            let shifted_family = fam.with_log_shift(c);
            match fit_gamma(&shifted_family, &data, *g, None, &cfg) {
                Ok(f) => est_err = est_err.max(max_rel_diff(&theta0, &fam.theta(f.params.unshifted().0).unwrap())),
                Err(e) => {
                    notes.push(format!("{name} shift {c}: {e}"));
                    est_err = f64::INFINITY;
                }
            }
        }
    }

    // Goodness-of-fit decision, p-value and rescaled statistic.
    let q = GaussianParams::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let data = sample(&ModelSpec::Gaussian(GaussianParams::new(vec![0.3, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap()), 150, &mut rng(40))
        .unwrap();
    let k = KernelSpec::median(&data).unwrap();
    let (mut decisions_same, mut stat_err) = (true, 0.0f64);
    for gamma in [0.0, 0.3, 0.5] {
        let base = gof_test(&data, &ModelSpec::Gaussian(q.clone()), gamma, &k, &Calibration::Multiplier, 200, 0.05, &mut rng(41))
            .unwrap();
        for c in SHIFTS {
            let shifted = ModelSpec::Gaussian(q.clone()).shifted(c);
            let t = gof_test(&data, &shifted, gamma, &k, &Calibration::Multiplier, 200, 0.05, &mut rng(41)).unwrap();
            decisions_same &= t.reject == base.reject && t.p_value == base.p_value;
            stat_err = stat_err.max(rel(t.statistic * (-2.0 * gamma * c).exp(), base.statistic));
        }
    }

    // SVGD trajectory with softmax weights.
    let target = ModelSpec::Gaussian(GaussianParams::new(vec![1.0, -0.5], vec![2.0, 0.5, 0.5, 1.0]).unwrap());
    let mut r = rng(42);
    let init: Vec<Vec<f64>> = (0..24).map(|_| normal_vec(&mut r, 2)).collect();
    let ens = ParticleEnsemble::new(init, 42).unwrap();
    let cfg = SvgdConfig { iterations: 150, gamma_target: 0.5, ..SvgdConfig::default() };
    let base = run_svgd(&cfg, &target, &ens).unwrap();
    let mut traj_err = 0.0f64;
    for c in SHIFTS {
        let out = run_svgd(&cfg, &target.shifted(c), &ens).unwrap();
        for (a, b) in out.ensemble.positions.iter().flatten().zip(base.ensemble.positions.iter().flatten()) {
            traj_err = traj_err.max(rel(*a, *b));
        }
    }

    Outcome {
        pass: est_err <= TOL && decisions_same && stat_err <= TOL && traj_err <= TOL,
        detail: format!(
            "estimators max rel diff {est_err:.1e}; decisions identical {decisions_same}, rescaled statistic {stat_err:.1e}; SVGD positions {traj_err:.1e} (tol {TOL:.0e}){}",
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        ),
    }
}

// ---- 4 -------------------------------------------------------------------

/// Reference integrated RMSE, rows MLE then γ = 0, 0.05, 0.1, 0.2, 0.3;
/// columns ε = 0, 0.05, 0.1, 0.2.
const TABLE1: [[f64; 4]; 6] = [
    [0.45, 4.81, 6.53, 8.06],
    [0.45, 0.88, 1.66, 3.50],
    [0.76, 0.56, 0.55, 1.40],
    [1.29, 1.19, 1.08, 0.73],
    [2.65, 2.66, 2.69, 2.59],
    [4.45, 4.49, 4.56, 4.44],
];

fn table1(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let (rows, _) = vmf::run(&opts(dir)).expect("vmf-table1 runs");
    let (rt_ok, rt) = runtime(start, 300.0);
    let est: [Option<f64>; 6] = [None, Some(0.0), Some(0.05), Some(0.10), Some(0.20), Some(0.30)];
    let get = |e: f64, g: Option<f64>| rows.iter().find(|r| r.eps == e && r.gamma == g).map_or(f64::NAN, |r| r.integrated_rmse);
    let mut within = 0;
    let mut worst = (0.0f64, String::new());
    for (i, g) in est.iter().enumerate() {
        for (j, e) in vmf::RATES.iter().enumerate() {
            let dev = (get(*e, *g) / TABLE1[i][j] - 1.0).abs();
            if dev <= 0.5 {
                within += 1;
            }
            if dev > worst.0 || worst.0.is_nan() {
                worst = (dev, format!("{} at eps={e}", g.map_or("MLE".into(), |g| format!("gamma={g}"))));
            }
        }
    }
    let best_at = |e: f64| {
        est.iter().min_by(|a, b| get(e, **a).total_cmp(&get(e, **b))).copied().flatten()
    };
    let best_020 = est.iter().copied().min_by(|a, b| get(0.2, *a).total_cmp(&get(0.2, *b))).unwrap();
    let best_0 = best_at(0.0);
    let order_ok = best_020 == Some(0.10) && est.iter().all(|g| g.is_none() || get(0.0, None) <= get(0.0, *g));
    Outcome {
        pass: order_ok && within == 24 && rt_ok,
        detail: format!(
            "best at eps=0.2: {}, best at eps=0: {}; {within}/24 entries within 50% (worst {:.0}% {}); gamma=0.10 at eps=0.2 {:.2}, MLE at eps=0.2 {:.2}; {rt}",
            best_020.map_or("MLE".into(), |g| format!("gamma={g}")),
            best_0.map_or("MLE".into(), |g| format!("gamma={g}")),
            100.0 * worst.0,
            worst.1,
            get(0.2, Some(0.1)),
            get(0.2, None),
        ),
    }
}

// ---- 5 -------------------------------------------------------------------

fn table2(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let (rows, _) = cv::run(&opts(dir)).expect("cv-table2 runs");
    let (rt_ok, rt) = runtime(start, 600.0);
    let targets = [(0.05, 0.05), (0.10, 0.10), (0.20, 0.10)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (eps, want) in targets {
        let picks: Vec<String> = cv::ANCHORS
            .iter()
            .map(|g0| rows.iter().find(|r| r.eps == eps && r.gamma0 == *g0).map_or("-".into(), |r| format!("{}", r.modal_argmin)))
            .collect();
        let hits = cv::ANCHORS
            .iter()
            .filter(|g0| rows.iter().any(|r| r.eps == eps && r.gamma0 == **g0 && r.modal_argmin == want))
            .count();
        ok &= hits >= 2;
        parts.push(format!("eps={eps}: picks [{}] want {want} ({hits}/3)", picks.join(", ")));
    }
    Outcome { pass: ok && rt_ok, detail: format!("{}; {rt}", parts.join("; ")) }
}

// ---- 6 -------------------------------------------------------------------

fn table3(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let (rows, _) = nmm::run(&opts(dir)).expect("nmm-table3 runs");
    let (rt_ok, rt) = runtime(start, 600.0);
    let get = |e: f64, est: &str| rows.iter().find(|r| r.eps == e && r.estimator == est).expect("cell present");
    let (s10, m10) = (get(0.10, nmm::STEIN), get(0.10, nmm::EM));
    let ratio = m10.rmse_sigma / s10.rmse_sigma;
    let (s0, m0) = (get(0.0, nmm::STEIN), get(0.0, nmm::EM));
    let clean = m0.rmse_pi < s0.rmse_pi && m0.rmse_mu < s0.rmse_mu && m0.rmse_sigma < s0.rmse_sigma;
    Outcome {
        pass: ratio >= 3.0 && clean && rt_ok,
        detail: format!(
            "eps=10%: Sigma ratio MLE/stein {ratio:.2} ({:.3}/{:.3}); eps=0: MLE {:.3}/{:.3}/{:.3} vs stein {:.3}/{:.3}/{:.3}; {rt}",
            m10.rmse_sigma, s10.rmse_sigma, m0.rmse_pi, m0.rmse_mu, m0.rmse_sigma, s0.rmse_pi, s0.rmse_mu, s0.rmse_sigma
        ),
    }
}

// ---- 7 -------------------------------------------------------------------

fn table4(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let (rows, _) = quartic::run(&opts(dir)).expect("quartic-table4 runs");
    let (rt_ok, rt) = runtime(start, 600.0);
    let get = |e: f64, g: Option<f64>| rows.iter().find(|r| r.eps == e && r.gamma == g).map_or(f64::NAN, |r| r.rmse);
    let (mo, so) = (get(0.10, None), get(0.10, Some(0.3)));
    let (mc, sc) = (get(0.0, None), get(0.0, Some(0.3)));
    Outcome {
        pass: so < 0.5 * mo && mc < sc && rt_ok,
        detail: format!("outliers: gamma=0.3 {so:.3} vs MLE {mo:.3}; clean: MLE {mc:.3} vs gamma=0.3 {sc:.3}; {rt}"),
    }
}

// ---- 8 -------------------------------------------------------------------

fn table5(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let (rows, _) = power::run(&opts(dir)).expect("power-table5 runs");
    let (rt_ok, rt) = runtime(start, 900.0);
    let get = |d: f64, g: f64| rows.iter().find(|r| r.delta == d && r.gamma == g).map_or(f64::NAN, |r| r.rejection_rate);
    let type1: Vec<f64> = power::GAMMAS.iter().map(|&g| get(0.0, g)).collect();
    let type1_ok = type1.iter().all(|t| (t - 0.05).abs() <= 0.03);
    let p06 = get(0.6, 0.5);
    let g0: Vec<f64> = power::SHIFTS.iter().map(|&d| get(d, 0.0)).collect();
    let g0_ok = g0.iter().all(|p| *p <= 0.15);
    Outcome {
        pass: type1_ok && p06 >= 0.85 && g0_ok && rt_ok,
        detail: format!(
            "type I {type1:?} (0.05 +- 0.03: {type1_ok}); power(0.6, 0.5) {p06:.3} (>= 0.85); gamma=0 power {g0:?} (<= 0.15: {g0_ok}); {rt}"
        ),
    }
}

// ---- 9 -------------------------------------------------------------------

fn table6(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let (rows, _) = svgd::run(&opts(dir)).expect("svgd-table6 runs");
    let (rt_ok, rt) = runtime(start, 600.0);
    let get = |s: &str, g: f64| rows.iter().find(|r| r.scenario == s && r.gamma == g).map_or(f64::NAN, |r| r.mean_rmse);
    let clean_best = svgd::GAMMAS.iter().copied().min_by(|a, b| get("clean", *a).total_cmp(&get("clean", *b))).unwrap();
    let y_ok = get("y-contam", 0.10) < get("y-contam", 0.0);
    let mixed = get("xy-contam", 0.02).min(get("xy-contam", 0.05));
    let mixed_ok = mixed < get("xy-contam", 0.0);
    Outcome {
        pass: clean_best == 0.0 && y_ok && mixed_ok && rt_ok,
        detail: format!(
            "clean argmin gamma={clean_best}; Y: gamma=0.10 {:.3} vs gamma=0 {:.3}; mixed: best of 0.02/0.05 {mixed:.3} vs gamma=0 {:.3}; {rt}",
            get("y-contam", 0.10),
            get("y-contam", 0.0),
            get("xy-contam", 0.0)
        ),
    }
}

// ---- 10 ------------------------------------------------------------------

fn max_z(family: &Family, theta: &[f64], data: &Dataset, gamma: f64) -> f64 {
    let terms = estimating_terms(family, theta, data, gamma).unwrap();
    let n = terms.len() as f64;
    (0..family.equation_count())
        .map(|k| {
            let col: Vec<f64> = terms.iter().map(|t| t[k]).collect();
            let sd = sample_sd(&col);
            if sd == 0.0 {
                mean(&col).abs() * 1e12
            } else {
                mean(&col).abs() / (sd / n.sqrt())
            }
        })
        .fold(0.0, f64::max)
}

fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = 1e-5 * (1.0 + x[k].abs());
            p[k] = x[k] + h;
            let up = f(&p);
            p[k] = x[k] - h;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn properties() -> Outcome {
    let start = Instant::now();
    let n = 50_000;

    // unbiasedness at the truth
    let gauss = ModelSpec::Gaussian(GaussianParams::new(vec![0.5, -1.0], vec![2.0, 0.6, 0.6, 1.0]).unwrap());
    let vmf = ModelSpec::Vmf(VmfParams::new(vec![0.0, 0.6, 0.8], 4.0).unwrap());
    let fb = ModelSpec::FisherBingham(
        FisherBinghamParams::new(vec![2.0, 0.0, 1.0], vec![1.0, 0.3, 0.0, 0.3, -0.5, 0.0, 0.0, 0.0, -0.5]).unwrap(),
    );
    let quart = ModelSpec::Quartic(QuarticParams::new(0.0, 2.0, -0.5).unwrap());
    let mix = ModelSpec::Mixture(
        MixtureParams::new(vec![0.3, 0.7], vec![vec![-2.0, 0.0], vec![2.0, 1.0]], vec![1.0, 0.5]).unwrap(),
    );
    let unbiased_vmf = Family::new(FamilyKind::Vmf { dim: 3, equation: VmfEquation::Unbiased });
    let families: Vec<(&str, Family, &ModelSpec, f64)> = vec![
        ("gaussian", Family::gaussian(2), &gauss, 0.4),
        ("vmf", unbiased_vmf, &vmf, 0.5),
        ("fisher-bingham", Family::fisher_bingham(3), &fb, 0.2),
        ("quartic", Family::quartic(), &quart, 0.3),
        ("mixture", Family::mixture(2, 2), &mix, 0.3),
    ];
    let mut z_max = 0.0f64;
    for (i, (_, fam, model, g)) in families.iter().enumerate() {
        let data = sample(model, n, &mut rng(60 + i as u64)).unwrap();
        z_max = z_max.max(max_z(fam, &fam.theta(model).unwrap(), &data, *g));
    }

    // Jacobian asymmetry, averaged over five seeds per n
    let one_d = ModelSpec::Gaussian(GaussianParams::scalar(0.3, 1.5).unwrap());
    let fam = Family::gaussian(1);
    let theta = fam.theta(&one_d).unwrap();
    let ratio = |m: usize| {
        (0..5)
            .map(|s| {
                let d = sample(&one_d, m, &mut rng(100 + s)).unwrap();
                jacobian_symmetry_diagnostic(&fam, &theta, &d, 0.5).unwrap()
            })
            .sum::<f64>()
            / 5.0
    };
    let asym = [ratio(100), ratio(1000), ratio(10_000)];
    let asym_ok = asym[0] > asym[1] && asym[1] > asym[2];

    // KSD mean under H0, Euclidean and spherical
    let mut ksd_z = 0.0f64;
    for (i, (model, gamma)) in [(&gauss, 0.5), (&vmf, 0.3)].iter().enumerate() {
        let pilot = sample(model, 200, &mut rng(70 + i as u64)).unwrap();
        let k = KernelSpec::median(&pilot).unwrap();
        let mut r = rng(80 + i as u64);
        let stats: Vec<f64> =
            (0..400).map(|_| ksd_ustat(&sample(model, 40, &mut r).unwrap(), model, *gamma, &k).unwrap().statistic).collect();
        ksd_z = ksd_z.max(mean(&stats).abs() / (sample_sd(&stats) / (stats.len() as f64).sqrt()));
    }

    // x-scores against finite differences of log u
    let mut fd_err = 0.0f64;
    let mut r = rng(90);
    let models: Vec<(&ModelSpec, bool)> = vec![(&gauss, false), (&vmf, true), (&fb, true), (&quart, false), (&mix, false)];
    for (model, sphere) in models {
        for _ in 0..20 {
            let mut x = normal_vec(&mut r, model.dim());
            if sphere {
                let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                x.iter_mut().for_each(|v| *v /= nx);
            }
            let score = evaluate(model, &x).unwrap().score_x;
            if !sphere {
                let fd = fd_gradient(&|y: &[f64]| model.log_u(y).unwrap(), &x);
                for (a, b) in score.iter().zip(&fd) {
                    fd_err = fd_err.max((a - b).abs() / a.abs().max(1.0));
                }
                continue;
            }
            // directional derivative along the great circle through x towards t
            for _ in 0..3 {
                let v = normal_vec(&mut r, x.len());
                let vx: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
                let mut t: Vec<f64> = v.iter().zip(&x).map(|(a, b)| a - vx * b).collect();
                let nt = t.iter().map(|a| a * a).sum::<f64>().sqrt();
                t.iter_mut().for_each(|a| *a /= nt);
                let arc = |s: f64| -> f64 {
                    let y: Vec<f64> = x.iter().zip(&t).map(|(a, b)| s.cos() * a + s.sin() * b).collect();
                    model.log_u(&y).unwrap()
                };
                let fd = fd_gradient(&|s: &[f64]| arc(s[0]), &[0.0])[0];
                let want: f64 = score.iter().zip(&t).map(|(a, b)| a * b).sum();
                fd_err = fd_err.max((want - fd).abs() / want.abs().max(1.0));
            }
        }
    }
    let params = PoissonRegParams::split_prior(vec![0.5, 0.3, -0.2], 100.0, 1.0).unwrap();
    let data = sample(&ModelSpec::PoissonRegression(params.clone()), 100, &mut r).unwrap();
    for gamma in [0.0, 0.05, 0.1] {
        let target = PoissonTarget::new(&data, params.prior_variances.clone(), gamma).unwrap();
        for _ in 0..5 {
            let a: Vec<f64> = normal_vec(&mut r, 3).iter().map(|v| 0.3 * v).collect();
            let (_, g) = target.log_u_grad(&a).unwrap();
            let fd = fd_gradient(&|b: &[f64]| target.log_u_grad(b).unwrap().0, &a);
            for (x, y) in g.iter().zip(&fd) {
                fd_err = fd_err.max((x - y).abs() / x.abs().max(1.0));
            }
        }
    }
    let (rt_ok, rt) = runtime(start, 300.0);
    Outcome {
        pass: z_max < 5.0 && asym_ok && ksd_z < 5.0 && fd_err < 1e-5 && rt_ok,
        detail: format!(
            "unbiasedness max |z| {z_max:.2}; Jacobian asymmetry {:.2e} > {:.2e} > {:.2e}: {asym_ok}; KSD H0 max |z| {ksd_z:.2}; score FD max rel {fd_err:.1e}; {rt}",
            asym[0], asym[1], asym[2]
        ),
    }
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let tmp = tempfile::tempdir().expect("temporary output directory");
    let dir = tmp.path();
    type Criterion<'a> = (usize, &'a str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "identity suite", Box::new(identities)),
        (2, "gamma=0 reductions", Box::new(reductions)),
        (3, "normalizer invariance", Box::new(normalizer_invariance)),
        (4, "vmf table", Box::new(|| table1(dir))),
        (5, "cv selection table", Box::new(|| table2(dir))),
        (6, "nmm table", Box::new(|| table3(dir))),
        (7, "quartic table", Box::new(|| table4(dir))),
        (8, "power table", Box::new(|| table5(dir))),
        (9, "svgd poisson table", Box::new(|| table6(dir))),
        (10, "property suite", Box::new(properties)),
    ];
    let mut failed = 0;
    for (id, name, f) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(id)) {
            continue;
        }
        let out = f();
        if !out.pass {
            failed += 1;
        }
        println!("{} criterion {id} ({name}): {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    println!("acceptance: {failed} criteria failed");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
