//! K-fold cross-validated choice of the robustness exponent.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimating_terms, fit_gamma, Family, SolverConfig};
use crate::ksd::{ksd_ustat, KernelSpec};
use crate::models::ModelSpec;
use crate::numeric::{log_sum_exp, norm_sq};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_ANCHOR: f64 = 0.1;
/// A candidate is dropped when more than this share of its folds fail.
pub const MAX_INVALID_SHARE: f64 = 0.2;

/// Held-out score used to compare candidate exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "gamma0")]
pub enum Validator {
    /// Mean of `U_{γ₀}ᵀU_{γ₀}` over the held-out fold.
    Residual(f64),
    /// Held-out γ₀-KSD U-statistic, median bandwidth frozen per fold.
    Ksd(f64),
}

impl Validator {
    pub fn anchor(&self) -> f64 {
        match *self {
            Validator::Residual(g) | Validator::Ksd(g) => g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvTable {
    pub gamma_grid: Vec<f64>,
    /// `scores[k][j]` for fold `k` and candidate `j`; `NaN` marks a failed fit.
    pub scores: Vec<Vec<f64>>,
    /// Mean over valid folds; `NaN` for dropped candidates.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub validator: Validator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub gamma_argmin: f64,
    pub gamma_one_se: f64,
    /// Share of replications picking the modal value; only set by [`stability`].
    pub stability_proportion: Option<f64>,
}

/// Random assignment of `0..n` to `k` folds with sizes differing by at most one.
pub fn kfold_split<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("need 2 <= K <= n, got K = {k}, n = {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (i, v) in idx.into_iter().enumerate() {
        folds[i % k].push(v);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// One-SE rule: the smallest candidate whose mean is within the argmin's
/// standard error of the minimum. Returns `(argmin, one_se)`; `NaN` means skip.
pub fn one_se_rule(grid: &[f64], mean: &[f64], stderr: &[f64]) -> Result<(f64, f64)> {
    let best = (0..grid.len())
        .filter(|&j| mean[j].is_finite())
        .min_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(grid[a].total_cmp(&grid[b])))
        .ok_or_else(|| Error::InvalidArgument("every candidate was dropped".into()))?;
    let bound = mean[best] + stderr[best];
    let one_se = (0..grid.len())
        .filter(|&j| mean[j].is_finite() && mean[j] <= bound)
        .map(|j| grid[j])
        .fold(f64::INFINITY, f64::min);
    Ok((grid[best], one_se))
}

fn fold_score(family: &Family, fit_data: &Dataset, held: &Dataset, gamma: f64, validator: Validator, kernel: &KernelSpec, cfg: &SolverConfig) -> Result<f64> {
    let fit = fit_gamma(family, fit_data, gamma, None, cfg)?;
    let score = match validator {
        Validator::Residual(g0) => {
            let theta = family.theta(fit.params.unshifted().0)?;
            let terms = estimating_terms(family, &theta, held, g0)?;
            terms.iter().map(|t| norm_sq(t)).sum::<f64>() / held.len() as f64
        }
        Validator::Ksd(g0) => ksd_ustat(held, &fit.params, g0, kernel)?.statistic,
    };
    let score = score * (-2.0 * log_mean_weight(&fit.params, held, validator.anchor())?).exp();
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::NonFinite { what: "validation score", point: vec![gamma] })
    }
}

/// `log mean_i u(x_i)^γ₀` over the held-out fold. Dividing a validator by the
/// square of this mean removes its dependence on the scale of `u`.
fn log_mean_weight(model: &ModelSpec, held: &Dataset, gamma0: f64) -> Result<f64> {
    if gamma0 == 0.0 {
        return Ok(0.0);
    }
    let logs: Vec<f64> = held.rows().map(|x| model.log_u(x).map(|l| gamma0 * l)).collect::<Result<_>>()?;
    Ok(log_sum_exp(&logs) - (held.len() as f64).ln())
}

/// Scores every candidate exponent on every held-out fold, then applies the
/// argmin and one-SE rules.
pub fn cv_select<R: Rng + ?Sized>(
    data: &Dataset,
    family: &Family,
    gamma_grid: &[f64],
    k: usize,
    validator: Validator,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<(CvTable, SelectionResult)> {
    if gamma_grid.is_empty() {
        return Err(Error::InvalidArgument("empty gamma grid".into()));
    }
    if !(validator.anchor() >= 0.0) || gamma_grid.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidArgument("exponents must be non-negative".into()));
    }
    let folds = kfold_split(data.len(), k, rng)?;
    let mut scores = Vec::with_capacity(k);
    for (f, held_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> =
            folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
        let train = data.subset(&train_idx);
        let held = data.subset(held_idx);
        let kernel = KernelSpec::median(&held)?;
        let row: Vec<f64> = gamma_grid
            .iter()
            .map(|&g| fold_score(family, &train, &held, g, validator, &kernel, cfg).unwrap_or(f64::NAN))
            .collect();
        scores.push(row);
    }
    let (mean, stderr) = aggregate(&scores, gamma_grid.len());
    let (gamma_argmin, gamma_one_se) = one_se_rule(gamma_grid, &mean, &stderr)?;
    let table = CvTable { gamma_grid: gamma_grid.to_vec(), scores, mean, stderr, validator };
    Ok((table, SelectionResult { gamma_argmin, gamma_one_se, stability_proportion: None }))
}

/// Column means and standard errors over valid folds, dropping columns with
/// too many failures.
fn aggregate(scores: &[Vec<f64>], m: usize) -> (Vec<f64>, Vec<f64>) {
    let k = scores.len();
    let mut mean = vec![f64::NAN; m];
    let mut stderr = vec![f64::NAN; m];
    for j in 0..m {
        let col: Vec<f64> = scores.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
        let invalid = (k - col.len()) as f64 / k as f64;
        if col.is_empty() || invalid > MAX_INVALID_SHARE {
            continue;
        }
        let c = col.len() as f64;
        let mu = col.iter().sum::<f64>() / c;
        let var = if col.len() > 1 { col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (c - 1.0) } else { 0.0 };
        mean[j] = mu;
        stderr[j] = (var / c).sqrt();
    }
    (mean, stderr)
}

/// Modal selection across replications and the share choosing it. Ties go to
/// the smaller value.
pub fn stability(selections: &[f64]) -> Option<(f64, f64)> {
    if selections.is_empty() {
        return None;
    }
    let mut sorted = selections.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut best, mut best_count) = (sorted[0], 0);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        if j > best_count {
            best = sorted[i];
            best_count = j;
        }
        i += j;
    }
    Some((best, best_count as f64 / selections.len() as f64))
}
