//! Simulation scenarios: a clean model, a contamination mechanism, and
//! counter-based seeding for replications.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::models::sample::draw_poisson;
use crate::models::{sample, sample_vmf, ModelSpec, VmfParams};

/// How contaminant points are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ContaminationKind {
    None,
    /// vMF with the clean mean direction reversed.
    AntipodalVmf { kappa: f64 },
    /// Multivariate Student t, `center + scale · z / sqrt(w/df)`.
    StudentT { df: f64, scale: f64, center: Vec<f64> },
    /// `±location + spread · N(0,1)` with a random sign.
    QuarticOutlier { location: f64, spread: f64 },
    /// Isotropic normal cloud around `center`.
    Gaussian { center: Vec<f64>, scale: f64 },
    /// Leverage rows: one random covariate multiplied by `factor`.
    Covariate { factor: f64 },
    /// Count spikes: `y += Poisson(multiplier · mean y)`.
    Outcome { multiplier: f64 },
    /// Leverage rows and count spikes on disjoint row sets, each at the full rate.
    CovariateOutcome { factor: f64, multiplier: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSpec {
    pub kind: ContaminationKind,
    pub rate: f64,
}

impl ContaminationSpec {
    pub fn none() -> Self {
        Self { kind: ContaminationKind::None, rate: 0.0 }
    }

    pub fn new(kind: ContaminationKind, rate: f64) -> Result<Self> {
        let s = Self { kind, rate };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::InvalidArgument(format!("contamination rate must lie in [0, 1), got {}", self.rate)));
        }
        Ok(())
    }

    /// `⌊εn⌋`, with a small guard so that e.g. `0.1 · 400` is not rounded down to 39.
    pub fn count(&self, n: usize) -> usize {
        if matches!(self.kind, ContaminationKind::None) {
            return 0;
        }
        (self.rate * n as f64 + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub n: usize,
    pub contamination: ContaminationSpec,
    pub gamma_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub output_dir: String,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.contamination.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidArgument("at least one replication is required".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        if self.gamma_grid.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidArgument("gamma grid entries must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generator for replication `rep` of table cell `cell`: a ChaCha stream
/// selected by the counter pair, so replications can run in any order.
pub fn replication_rng(seed: u64, cell: u32, rep: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng
}

fn student_t_point<R: Rng + ?Sized>(df: f64, scale: f64, center: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let chi = ChiSquared::new(df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let w: f64 = chi.sample(rng);
    let f = scale / (w / df).sqrt();
    Ok(center.iter().map(|c| c + f * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Draws `n - ⌊εn⌋` clean points and `⌊εn⌋` contaminants, shuffles, and tags
/// provenance. Regression scenarios instead alter `⌊εn⌋` rows in place.
pub fn generate_dataset<R: Rng + ?Sized>(scenario: &ScenarioConfig, rep: u32, rng: &mut R) -> Result<Dataset> {
    scenario.validate()?;
    let n = scenario.n;
    let spec = &scenario.contamination;
    let m = spec.count(n);
    let model = scenario.model.unshifted().0;
    let d = model.dim();
    let (rows, response, flags) = match &spec.kind {
        ContaminationKind::Covariate { .. }
        | ContaminationKind::Outcome { .. }
        | ContaminationKind::CovariateOutcome { .. } => regression_rows(model, n, m, &spec.kind, rng)?,
        ContaminationKind::None if matches!(model, ModelSpec::PoissonRegression(_)) => {
            let ds = sample(model, n, rng)?;
            (ds.rows().map(<[f64]>::to_vec).collect(), ds.response, vec![false; n])
        }
        kind => {
            let clean = if n > m { Some(sample(model, n - m, rng)?) } else { None };
            let mut rows: Vec<Vec<f64>> = clean.iter().flat_map(|c| c.rows().map(<[f64]>::to_vec)).collect();
            let mut flags = vec![false; rows.len()];
            for _ in 0..m {
                rows.push(contaminant(model, kind, rng)?);
                flags.push(true);
            }
            (rows, None, flags)
        }
    };
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);
    let mut values = Vec::with_capacity(n * d);
    for &i in &order {
        values.extend_from_slice(&rows[i]);
    }
    let mut ds = Dataset::new(rows.first().map_or(d, Vec::len), values)?;
    if let Some(y) = response {
        ds = ds.with_response(order.iter().map(|&i| y[i]).collect())?;
    }
    ds.provenance = Provenance {
        scenario: scenario.experiment.clone(),
        seed: scenario.seed ^ rep as u64,
        contamination_rate: spec.rate,
        contaminated: order.iter().map(|&i| flags[i]).collect(),
    };
    Ok(ds)
}

fn contaminant<R: Rng + ?Sized>(model: &ModelSpec, kind: &ContaminationKind, rng: &mut R) -> Result<Vec<f64>> {
    let d = model.dim();
    let check = |len: usize| {
        if len == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: d, got: len })
        }
    };
    match kind {
        ContaminationKind::AntipodalVmf { kappa } => {
            let ModelSpec::Vmf(p) = model else {
                return Err(Error::Unsupported("antipodal contamination outside the vMF family"));
            };
            let anti = VmfParams::new(p.mu.iter().map(|v| -v).collect(), *kappa)?;
            sample_vmf(&anti, 1, rng)
        }
        ContaminationKind::StudentT { df, scale, center } => {
            check(center.len())?;
            student_t_point(*df, *scale, center, rng)
        }
        ContaminationKind::QuarticOutlier { location, spread } => {
            check(1)?;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            Ok(vec![sign * location + spread * rng.sample::<f64, _>(StandardNormal)])
        }
        ContaminationKind::Gaussian { center, scale } => {
            check(center.len())?;
            Ok(center.iter().map(|c| c + scale * rng.sample::<f64, _>(StandardNormal)).collect())
        }
        ContaminationKind::None => Err(Error::InvalidArgument("no contaminant to draw".into())),
        _ => Err(Error::Unsupported("row-altering contamination outside regression")),
    }
}

type Rows = (Vec<Vec<f64>>, Option<Vec<u64>>, Vec<bool>);

fn regression_rows<R: Rng + ?Sized>(
    model: &ModelSpec,
    n: usize,
    m: usize,
    kind: &ContaminationKind,
    rng: &mut R,
) -> Result<Rows> {
    if !matches!(model, ModelSpec::PoissonRegression(_)) {
        return Err(Error::Unsupported("covariate or outcome contamination outside Poisson regression"));
    }
    let ds = sample(model, n, rng)?;
    let mut rows: Vec<Vec<f64>> = ds.rows().map(<[f64]>::to_vec).collect();
    let mut y = ds.response.clone().expect("regression samples carry counts");
    let mean_y = y.iter().sum::<u64>() as f64 / n as f64;
    let mut flags = vec![false; n];
    let (factor, multiplier) = match *kind {
        ContaminationKind::Covariate { factor } => (Some(factor), None),
        ContaminationKind::Outcome { multiplier } => (None, Some(multiplier)),
        ContaminationKind::CovariateOutcome { factor, multiplier } => (Some(factor), Some(multiplier)),
        _ => unreachable!("caller matched regression kinds"),
    };
    let mut next = 0;
    if let Some(f) = factor {
        for i in 0..m.min(n) {
            let c = rng.random_range(0..rows[i].len());
            rows[i][c] *= f;
            flags[i] = true;
        }
        next = m.min(n);
    }
    if let Some(mult) = multiplier {
        for i in next..(next + m).min(n) {
            y[i] += draw_poisson(mult * mean_y, rng);
            flags[i] = true;
        }
    }
    Ok((rows, Some(y), flags))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vmf_scenario(rate: f64) -> ScenarioConfig {
        ScenarioConfig {
            experiment: "vmf".into(),
            model: ModelSpec::Vmf(VmfParams::new(vec![1.0, 0.0, 0.0], 10.0).unwrap()),
            n: 400,
            contamination: ContaminationSpec::new(ContaminationKind::AntipodalVmf { kappa: 50.0 }, rate).unwrap(),
            gamma_grid: vec![0.0],
            replications: 1,
            seed: 3,
            output_dir: "out".into(),
        }
    }

    #[test]
    fn contaminant_counts() {
        let mut rng = replication_rng(3, 0, 0);
        let ds = generate_dataset(&vmf_scenario(0.10), 0, &mut rng).unwrap();
        assert_eq!(ds.len(), 400);
        let flagged: Vec<usize> = (0..400).filter(|&i| ds.provenance.contaminated[i]).collect();
        assert_eq!(flagged.len(), 40);
        assert!(flagged.iter().all(|&i| ds.row(i)[0] < 0.0));
        let clean = generate_dataset(&vmf_scenario(0.0), 0, &mut rng).unwrap();
        assert!(clean.provenance.contaminated.iter().all(|f| !f));
    }

    #[test]
    fn rate_bounds() {
        assert!(ContaminationSpec::new(ContaminationKind::None, 1.0).is_err());
        assert!(ContaminationSpec::new(ContaminationKind::None, -0.1).is_err());
    }

    #[test]
    fn streams_are_reproducible() {
        let a: u64 = replication_rng(9, 1, 2).random();
        let b: u64 = replication_rng(9, 1, 2).random();
        let c: u64 = replication_rng(9, 2, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let good = serde_json::to_value(vmf_scenario(0.05)).unwrap();
        let back: ScenarioConfig = serde_json::from_value(good.clone()).unwrap();
        assert_eq!(back, vmf_scenario(0.05));
        let mut bad = good;
        bad["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ScenarioConfig>(bad).is_err());
    }
}
