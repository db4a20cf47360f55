use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Metric, ScoredCohort};
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleUnit {
    /// Resample patients, carrying all of their entries.
    Patient,
    /// Resample entries independently.
    Entry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub confidence: f64,
    pub seed: u64,
    pub workers: usize,
    pub unit: ResampleUnit,
    /// Largest tolerated fraction of replicates where the metric is undefined.
    pub max_degenerate_fraction: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            confidence: 0.95,
            seed: 0,
            workers: 1,
            unit: ResampleUnit::Patient,
            max_degenerate_fraction: 0.01,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<(), StatsError> {
        let bad = |m: String| Err(StatsError::InvalidArgument(m));
        if self.replicates == 0 {
            return bad("at least one bootstrap replicate is required".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence {} must lie in (0, 1)", self.confidence));
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub replicates_used: usize,
    pub skipped: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Sample quantile, linear interpolation between order statistics
/// (`h = (n − 1)p`). `sorted` must be ascending and non-empty.
pub fn percentile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over multiplicity vectors. `statistic` gets the
/// number of times each entry was drawn and returns `None` when the
/// statistic is undefined for that resample. Replicate `r` draws from its
/// own ChaCha stream, so results do not depend on `workers`.
pub fn bootstrap_with<F>(
    patients: &[&str],
    config: &BootstrapConfig,
    estimate: f64,
    statistic: F,
) -> Result<ConfidenceInterval, StatsError>
where
    F: Fn(&[u32]) -> Option<f64> + Sync,
{
    config.validate()?;
    let n = patients.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    let groups: Vec<Vec<usize>> = match config.unit {
        ResampleUnit::Entry => (0..n).map(|i| vec![i]).collect(),
        ResampleUnit::Patient => {
            let mut by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, p) in patients.iter().enumerate() {
                by.entry(p).or_default().push(i);
            }
            by.into_values().collect()
        }
    };
    let run = |r: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        let mut weights = vec![0u32; n];
        for _ in 0..groups.len() {
            for &i in &groups[rng.gen_range(0..groups.len())] {
                weights[i] += 1;
            }
        }
        statistic(&weights)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| StatsError::InvalidArgument(e.to_string()))?;
    let draws: Vec<Option<f64>> = pool.install(|| (0..config.replicates).into_par_iter().map(run).collect());
    let mut values: Vec<f64> = draws.into_iter().flatten().filter(|v| v.is_finite()).collect();
    let skipped = config.replicates - values.len();
    if skipped as f64 > config.max_degenerate_fraction * config.replicates as f64 || values.is_empty() {
        return Err(StatsError::TooManyDegenerate { skipped, replicates: config.replicates });
    }
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - config.confidence;
    Ok(ConfidenceInterval {
        estimate,
        lower: percentile_type7(&values, alpha / 2.0),
        upper: percentile_type7(&values, 1.0 - alpha / 2.0),
        confidence: config.confidence,
        replicates_used: values.len(),
        skipped,
    })
}

/// Point estimate and percentile interval of `metric` on `cohort`.
pub fn bootstrap_ci(cohort: &ScoredCohort, metric: Metric, config: &BootstrapConfig) -> Result<ConfidenceInterval, StatsError> {
    let eval = metric.prepare(cohort)?;
    let ones = vec![1u32; cohort.len()];
    let estimate = eval(&ones).ok_or(StatsError::SingleClass)?;
    let patients: Vec<&str> = cohort.entries.iter().map(|e| e.patient_id.as_str()).collect();
    bootstrap_with(&patients, config, estimate, eval)
}
