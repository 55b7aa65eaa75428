use gstein_core::ksd::{ksd_ustat, stein_kernel, KernelSpec};
use gstein_core::metrics::mixture_rmse;
use gstein_core::models::{GaussianParams, MixtureParams, VmfParams};
use gstein_core::numeric::{log_sum_exp, softmax_scaled};
use gstein_core::scenario::{generate_dataset, ContaminationKind, ContaminationSpec, ScenarioConfig};
use gstein_core::selection::{kfold_split, one_se_rule};
use gstein_core::svgd::{transport_weights, WeightScheme};
use gstein_core::{Dataset, ModelSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..4).prop_flat_map(|d| (point(d), point(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kfold_is_balanced_partition(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold_split(n, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn softmax_ignores_additive_shift(v in prop::collection::vec(-20.0f64..20.0, 1..30), scale in 0.0f64..2.0, c in -50.0f64..50.0) {
        let a = softmax_scaled(&v, scale).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let b = softmax_scaled(&shifted, scale).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let lse = log_sum_exp(&v);
        prop_assert!((log_sum_exp(&shifted) - lse - c).abs() < 1e-9 * (1.0 + lse.abs() + c.abs()));
    }

    #[test]
    fn transport_weights_match_softmax(v in prop::collection::vec(-10.0f64..10.0, 1..20), gamma in 0.0f64..1.0) {
        let w = transport_weights(&v, gamma, WeightScheme::Softmax).unwrap();
        let u = transport_weights(&v, gamma, WeightScheme::Unnormalized).unwrap();
        let total: f64 = u.iter().sum();
        for (a, b) in w.iter().zip(&u) {
            prop_assert!((a - b / total).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_symmetry_and_gradients((x, y) in pair(), h in 0.3f64..3.0) {
        let k = KernelSpec::rbf(h).unwrap();
        prop_assert_eq!(k.value(&x, &y), k.value(&y, &x));
        let gx = k.grad_x(&x, &y);
        let gy = k.grad_y(&x, &y);
        let step = 1e-5;
        let mut xp = x.clone();
        let mut mixed = 0.0;
        for c in 0..x.len() {
            prop_assert!((gx[c] + gy[c]).abs() < 1e-15);
            xp[c] = x[c] + step;
            let up = k.value(&xp, &y);
            let gy_up = k.grad_y(&xp, &y)[c];
            xp[c] = x[c] - step;
            let down = k.value(&xp, &y);
            let gy_down = k.grad_y(&xp, &y)[c];
            xp[c] = x[c];
            prop_assert!(((up - down) / (2.0 * step) - gx[c]).abs() < 1e-8);
            mixed += (gy_up - gy_down) / (2.0 * step);
        }
        prop_assert!((mixed - k.trace_mixed(&x, &y)).abs() < 1e-7);
    }

    #[test]
    fn stein_kernel_is_symmetric((x, y) in pair(), gamma in 0.0f64..1.0) {
        let d = x.len();
        let mut prec = vec![0.0; d * d];
        for i in 0..d {
            prec[i * d + i] = 1.0 + i as f64;
        }
        let q = ModelSpec::Gaussian(GaussianParams::new(vec![0.2; d], prec).unwrap());
        let k = KernelSpec::rbf(1.3).unwrap();
        let a = stein_kernel(&q, gamma, &k, &x, &y).unwrap();
        let b = stein_kernel(&q, gamma, &k, &y, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn ksd_is_permutation_invariant(seed in any::<u64>(), gamma in 0.0f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = ModelSpec::Vmf(VmfParams::new(vec![0.0, 0.0, 1.0], 3.0).unwrap());
        let data = gstein_core::models::sample(&q, 30, &mut rng).unwrap();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let k = KernelSpec::rbf(0.8).unwrap();
        let a = ksd_ustat(&data, &q, gamma, &k).unwrap().statistic;
        let b = ksd_ustat(&data.subset(&order), &q, gamma, &k).unwrap().statistic;
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn one_se_matches_brute_force(
        cells in prop::collection::vec((0.0f64..1.0, 0.0f64..0.2), 1..8),
    ) {
        let grid: Vec<f64> = (0..cells.len()).map(|i| 0.05 * i as f64).collect();
        let mean: Vec<f64> = cells.iter().map(|c| c.0).collect();
        let se: Vec<f64> = cells.iter().map(|c| c.1).collect();
        let (argmin, one_se) = one_se_rule(&grid, &mean, &se).unwrap();
        let mut best = 0;
        for j in 1..grid.len() {
            if mean[j] < mean[best] {
                best = j;
            }
        }
        prop_assert_eq!(argmin, grid[best]);
        let first = (0..grid.len()).find(|&j| mean[j] <= mean[best] + se[best]).unwrap();
        prop_assert_eq!(one_se, grid[first]);
    }

    #[test]
    fn mixture_rmse_ignores_labels(shift in -1.0f64..1.0, swap in any::<bool>()) {
        let truth = MixtureParams::new(vec![0.4, 0.6], vec![vec![-2.0, 0.0], vec![2.0, 1.0]], vec![1.0, 2.0]).unwrap();
        let mut means = truth.means.clone();
        means[1][0] += shift;
        let (w, m, p) = if swap {
            (vec![0.6, 0.4], vec![means[1].clone(), means[0].clone()], vec![2.0, 1.0])
        } else {
            (vec![0.4, 0.6], means, vec![1.0, 2.0])
        };
        let fit = MixtureParams::new(w, m, p).unwrap();
        let (rp, rm, rv) = mixture_rmse(&fit, &truth).unwrap();
        prop_assert!(rp < 1e-15 && rv < 1e-15);
        // one of J·d = 4 mean entries is off by `shift`
        prop_assert!((rm - shift.abs() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn contamination_count_is_floor(n in 10usize..400, rate in 0.0f64..0.5, seed in any::<u64>()) {
        let sc = ScenarioConfig {
            experiment: "prop".into(),
            model: ModelSpec::Gaussian(GaussianParams::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap()),
            n,
            contamination: ContaminationSpec::new(ContaminationKind::Gaussian { center: vec![5.0, 5.0], scale: 1.0 }, rate).unwrap(),
            gamma_grid: vec![0.0],
            replications: 1,
            seed,
            output_dir: String::new(),
        };
        let ds = generate_dataset(&sc, 0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(ds.len(), n);
        let m = ds.provenance.contaminated.iter().filter(|c| **c).count();
        prop_assert_eq!(m, (rate * n as f64 + 1e-9).floor() as usize);
    }
}

#[test]
fn generate_dataset_is_deterministic() {
    let sc = ScenarioConfig {
        experiment: "det".into(),
        model: ModelSpec::Vmf(VmfParams::new(vec![1.0, 0.0, 0.0], 10.0).unwrap()),
        n: 100,
        contamination: ContaminationSpec::new(ContaminationKind::AntipodalVmf { kappa: 50.0 }, 0.1).unwrap(),
        gamma_grid: vec![0.0],
        replications: 1,
        seed: 7,
        output_dir: String::new(),
    };
    let a: Dataset = generate_dataset(&sc, 3, &mut gstein_core::scenario::replication_rng(7, 0, 3)).unwrap();
    let b = generate_dataset(&sc, 3, &mut gstein_core::scenario::replication_rng(7, 0, 3)).unwrap();
    assert_eq!(a.values(), b.values());
    assert_eq!(a.provenance.contaminated.iter().filter(|c| **c).count(), 10);
}
