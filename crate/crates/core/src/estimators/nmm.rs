use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{solve_moment_norm, Family, FamilyKind, FitResult, SolverConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{mixture_terms, MixtureParams, ModelSpec};
use crate::numeric::{median, sq_dist};

/// Re-seed attempts before an empty cluster is reported.
const MAX_RESEEDS: usize = 10;
/// Independent k-means++ seedings tried by [`trimmed_kmeans`].
pub const KMEANS_STARTS: usize = 10;
/// Smallest variance EM may assign a component.
const VARIANCE_FLOOR: f64 = 1e-6;

/// Increasing `γ` path from 0 to the target, each stage warm-started from the last.
#[derive(Debug, Clone, PartialEq)]
pub struct HomotopySchedule {
    pub gamma_path: Vec<f64>,
    /// Objective evaluations allowed per stage.
    pub inner_iterations: usize,
}

impl HomotopySchedule {
    pub fn new(gamma_path: Vec<f64>, inner_iterations: usize) -> Result<Self> {
        let ok = gamma_path.first() == Some(&0.0) && gamma_path.windows(2).all(|w| w[1] > w[0]);
        if !ok {
            return Err(Error::InvalidArgument("homotopy path must start at 0 and increase strictly".into()));
        }
        Ok(Self { gamma_path, inner_iterations })
    }

    /// `stages + 1` equally spaced values from 0 to `target`.
    pub fn linear(target: f64, stages: usize, inner_iterations: usize) -> Result<Self> {
        if target == 0.0 {
            return Self::new(vec![0.0], inner_iterations);
        }
        let s = stages.max(1);
        Self::new((0..=s).map(|i| target * i as f64 / s as f64).collect(), inner_iterations)
    }

    pub fn target(&self) -> f64 {
        *self.gamma_path.last().expect("validated non-empty")
    }
}

/// How [`nmm_fit`] obtains its starting mixture.
#[derive(Debug, Clone, PartialEq)]
pub enum NmmInit {
    Given(MixtureParams),
    /// Trimmed k-means centres, cluster shares, and a median-based scale.
    TrimmedKMeans { trim: f64, seed: u64 },
}

/// Component order sorting means lexicographically (ties by index).
pub fn canonical_order(p: &MixtureParams) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.components()).collect();
    idx.sort_by(|&a, &b| {
        p.means[a]
            .iter()
            .zip(&p.means[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(a.cmp(&b))
    });
    idx
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Median of the χ²_d distribution (Wilson–Hilferty).
fn chi2_median(d: usize) -> f64 {
    let d = d as f64;
    d * (1.0 - 2.0 / (9.0 * d)).powi(3)
}

fn kmeans_pp<R: Rng + ?Sized>(data: &Dataset, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centres = vec![data.row(rng.random_range(0..n)).to_vec()];
    while centres.len() < k {
        let d2: Vec<f64> =
            data.rows().map(|x| centres.iter().map(|c| sq_dist(x, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter().position(|v| {
                acc += v;
                acc >= u
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centres.push(data.row(pick).to_vec());
    }
    centres
}

/// k-means in which the `trim` fraction of points farthest from their centre
/// is ignored when centres are updated. The best of [`KMEANS_STARTS`] seedings
/// by trimmed within-cluster sum of squares is kept.
pub fn trimmed_kmeans<R: Rng + ?Sized>(data: &Dataset, k: usize, trim: f64, rng: &mut R) -> Result<MixtureParams> {
    let n = data.len();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("cannot form {k} clusters from {n} points")));
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidArgument("trim fraction must lie in [0, 0.5)".into()));
    }
    let keep = n - (trim * n as f64).floor() as usize;
    let mut best: Option<(f64, MixtureParams)> = None;
    let mut reseeds = 0;
    let mut starts = 0;
    while starts < KMEANS_STARTS {
        match kmeans_run(data, k, keep, rng)? {
            Some((obj, p)) => {
                starts += 1;
                if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                    best = Some((obj, p));
                }
            }
            None => {
                reseeds += 1;
                if reseeds > MAX_RESEEDS {
                    break;
                }
            }
        }
    }
    best.map(|(_, p)| p).ok_or(Error::EmptyCluster(MAX_RESEEDS))
}

/// One trimmed Lloyd run; `None` when a cluster empties.
fn kmeans_run<R: Rng + ?Sized>(data: &Dataset, k: usize, keep: usize, rng: &mut R) -> Result<Option<(f64, MixtureParams)>> {
    let n = data.len();
    let d = data.dim();
    let mut centres = kmeans_pp(data, k, rng);
    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..200 {
        for (i, x) in data.rows().enumerate() {
            let (j, dj) = centres
                .iter()
                .enumerate()
                .map(|(j, c)| (j, sq_dist(x, c)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("k ≥ 1");
            assign[i] = j;
            dist[i] = dj;
        }
        order.sort_by(|a, b| dist[*a].total_cmp(&dist[*b]));
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for &i in &order[..keep] {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return Ok(None);
        }
        let updated: Vec<Vec<f64>> =
            sums.iter().zip(&counts).map(|(s, c)| s.iter().map(|v| v / *c as f64).collect()).collect();
        let moved = updated.iter().zip(&centres).map(|(a, b)| sq_dist(a, b)).fold(0.0, f64::max);
        centres = updated;
        if moved < 1e-20 {
            break;
        }
    }
    for (i, x) in data.rows().enumerate() {
        let (j, dj) = centres
            .iter()
            .enumerate()
            .map(|(j, c)| (j, sq_dist(x, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("k ≥ 1");
        assign[i] = j;
        dist[i] = dj;
    }
    order.sort_by(|a, b| dist[*a].total_cmp(&dist[*b]));
    let objective: f64 = order[..keep].iter().map(|&i| dist[i]).sum();
    let mut counts = vec![0usize; k];
    for &i in &order[..keep] {
        counts[assign[i]] += 1;
    }
    if counts.contains(&0) {
        return Ok(None);
    }
    let mut precisions = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<f64> = order[..keep].iter().filter(|&&i| assign[i] == j).map(|&i| dist[i]).collect();
        let var = (median(&members) / chi2_median(d)).max(VARIANCE_FLOOR);
        precisions.push(1.0 / var);
    }
    let weights: Vec<f64> = counts.iter().map(|c| *c as f64 / keep as f64).collect();
    Ok(Some((objective, MixtureParams::new(weights, centres, precisions)?)))
}

fn initial_mixture(data: &Dataset, k: usize, init: &NmmInit) -> Result<MixtureParams> {
    match init {
        NmmInit::Given(p) => {
            if p.components() != k || p.dim() != data.dim() {
                return Err(Error::InvalidArgument("initial mixture does not match the family".into()));
            }
            Ok(p.clone())
        }
        NmmInit::TrimmedKMeans { trim, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            trimmed_kmeans(data, k, *trim, &mut rng)
        }
    }
}

/// Homotopy fit of the spherical normal mixture from `γ = 0` to the schedule's
/// target. Components are processed in a canonical order and returned in the
/// order of the initial mixture.
pub fn nmm_fit(
    family: &Family,
    data: &Dataset,
    schedule: &HomotopySchedule,
    init: &NmmInit,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    let FamilyKind::Mixture { components, dim } = family.kind else {
        return Err(Error::InvalidArgument("nmm_fit needs a mixture family".into()));
    };
    if data.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: data.dim() });
    }
    if data.len() < 10 * family.param_count() {
        return Err(Error::InvalidArgument("need at least ten observations per parameter".into()));
    }
    let start = initial_mixture(data, components, init)?;
    let perm = canonical_order(&start);
    let mut theta = family.theta(&ModelSpec::Mixture(start.permuted(&perm)))?;
    let mut evals = 0;
    let mut trace = Vec::new();
    let mut last = None;
    let stages = schedule.gamma_path.len();
    for (s, &gamma) in schedule.gamma_path.iter().enumerate() {
        let stage_cfg = SolverConfig {
            max_evals: if s + 1 == stages { cfg.max_evals } else { schedule.inner_iterations },
            restarts: if s + 1 == stages { cfg.restarts } else { 1 },
            ..*cfg
        };
        let fit = solve_moment_norm(family, data, gamma, &theta, &stage_cfg)?;
        evals += fit.iterations;
        theta = family.theta(&fit.params)?;
        trace.push(theta.clone());
        last = Some(fit);
    }
    let fit = last.expect("schedule is non-empty");
    let ModelSpec::Mixture(p) = fit.params.unshifted().0.clone() else {
        unreachable!("mixture family yields mixtures")
    };
    let mut out = p.permuted(&invert(&perm));
    let total: f64 = out.weights.iter().sum();
    out.weights.iter_mut().for_each(|w| *w /= total);
    let model = ModelSpec::Mixture(out);
    let params = if family.log_shift != 0.0 { model.shifted(family.log_shift) } else { model };
    Ok(FitResult { params, iterations: evals, converged: fit.converged, final_residual: fit.final_residual, trace: Some(trace), flags: fit.flags })
}

/// Mean log-likelihood of a spherical mixture.
pub fn mixture_log_likelihood(p: &MixtureParams, data: &Dataset) -> f64 {
    data.rows().map(|x| mixture_terms(p, x).log_p).sum::<f64>() / data.len() as f64
}

/// EM for spherical normal mixtures. The per-iteration log-likelihood is
/// recorded in `trace` (one single-element row per iteration).
pub fn nmm_em_mle(data: &Dataset, init: &MixtureParams, tol: f64, max_iter: usize) -> Result<FitResult> {
    let (k, d) = (init.components(), init.dim());
    if data.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: data.dim() });
    }
    let n = data.len();
    let mut p = init.clone();
    let mut ll = mixture_log_likelihood(&p, data);
    let mut trace = vec![vec![ll]];
    let mut flags = Vec::new();
    for iter in 1..=max_iter {
        let resp: Vec<Vec<f64>> = data.rows().map(|x| mixture_terms(&p, x).resp).collect();
        let mut next = p.clone();
        for j in 0..k {
            let nj: f64 = resp.iter().map(|r| r[j]).sum();
            if nj <= 0.0 {
                flags.push(format!("component {j} lost all responsibility at iteration {iter}"));
                continue;
            }
            let mut mu = vec![0.0; d];
            for (x, r) in data.rows().zip(&resp) {
                for (m, v) in mu.iter_mut().zip(x) {
                    *m += r[j] * v;
                }
            }
            mu.iter_mut().for_each(|m| *m /= nj);
            let ss: f64 = data.rows().zip(&resp).map(|(x, r)| r[j] * sq_dist(x, &mu)).sum();
            let mut var = ss / (d as f64 * nj);
            if var < VARIANCE_FLOOR {
                var = VARIANCE_FLOOR;
                flags.push(format!("variance floor applied to component {j} at iteration {iter}"));
            }
            next.weights[j] = nj / n as f64;
            next.means[j] = mu;
            next.precisions[j] = 1.0 / var;
        }
        let total: f64 = next.weights.iter().sum();
        next.weights.iter_mut().for_each(|w| *w /= total);
        let step = (0..k)
            .flat_map(|j| {
                let a = (next.weights[j] - p.weights[j]).abs();
                let b = next.means[j].iter().zip(&p.means[j]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                let c = (1.0 / next.precisions[j] - 1.0 / p.precisions[j]).abs();
                [a, b, c]
            })
            .fold(0.0, f64::max);
        p = next;
        let new_ll = mixture_log_likelihood(&p, data);
        if new_ll < ll - 1e-10 * (1.0 + ll.abs()) {
            flags.push(format!("log-likelihood decreased at iteration {iter}"));
        }
        ll = new_ll;
        trace.push(vec![ll]);
        if step < tol {
            return Ok(FitResult { params: ModelSpec::Mixture(p), iterations: iter, converged: true, final_residual: step, trace: Some(trace), flags });
        }
    }
    Ok(FitResult { params: ModelSpec::Mixture(p), iterations: max_iter, converged: false, final_residual: f64::NAN, trace: Some(trace), flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_validation() {
        assert!(HomotopySchedule::new(vec![0.1, 0.3], 10).is_err());
        assert!(HomotopySchedule::new(vec![0.0, 0.3, 0.3], 10).is_err());
        let s = HomotopySchedule::linear(0.3, 3, 10).unwrap();
        assert_eq!(s.gamma_path.len(), 4);
        assert!((s.target() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn canonical_order_sorts_means() {
        let p = MixtureParams::new(vec![0.5, 0.5], vec![vec![2.0, 0.0], vec![-2.0, 0.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(canonical_order(&p), vec![1, 0]);
        assert_eq!(invert(&[2, 0, 1]), vec![1, 2, 0]);
    }

    #[test]
    fn single_component_em_is_one_step() {
        let data = Dataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 1.0], vec![1.0, -1.0], vec![1.0, 3.0]]).unwrap();
        let init = MixtureParams::new(vec![1.0], vec![vec![5.0, 5.0]], vec![0.1]).unwrap();
        let fit = nmm_em_mle(&data, &init, 1e-12, 50).unwrap();
        let ModelSpec::Mixture(p) = &fit.params else { panic!() };
        assert_eq!(p.means[0], vec![1.0, 1.0]);
        // mean squared distance 2.5, per coordinate 1.25
        assert!((1.0 / p.precisions[0] - 1.25).abs() < 1e-14);
        assert!(fit.iterations <= 2);
    }
}
