use super::{solve_moment_norm, vmf_moment_init, Family, FitResult, SolverConfig};
use crate::dataset::Dataset;
use crate::error::Result;

/// γ-score-matching fit of a Fisher–Bingham model by moment-norm minimization.
/// Without `init`, starts at the unweighted vMF estimate with `B = 0`.
pub fn fisher_bingham_fit(data: &Dataset, gamma: f64, init: Option<&[f64]>, cfg: &SolverConfig) -> Result<FitResult> {
    let family = Family::fisher_bingham(data.dim());
    let start = match init {
        Some(t) => t.to_vec(),
        None => {
            let v = vmf_moment_init(data)?;
            let mut t: Vec<f64> = v.mu.iter().map(|m| v.kappa * m).collect();
            t.resize(family.param_count(), 0.0);
            t
        }
    };
    solve_moment_norm(&family, data, gamma, &start, cfg)
}
