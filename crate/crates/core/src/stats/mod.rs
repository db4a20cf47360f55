//! Discrimination and classification statistics with bootstrap intervals.
//!
//! Every estimator here accepts per-entry multiplicities so the bootstrap
//! can evaluate a resample without materialising it.

mod auc;
mod bootstrap;
mod classify;
mod nri;
mod report;

use thiserror::Error;

pub use auc::{auc, roc_curve, weighted_auc, RocPoint, SortedScores};
pub use bootstrap::{bootstrap_ci, bootstrap_with, percentile_type7, BootstrapConfig, ConfidenceInterval, ResampleUnit};
pub use classify::{
    odds_ratio, threshold_at_percentile, youden_optimal, ConfusionMatrix, OddsRatio, YoudenPoint, Z_975,
};
pub use nri::{categorical_nri, continuous_nri, nri_ci, ReclassificationTable};
pub use report::{evaluate, roc_csv, subgroup_report, Metric, MetricReport, ScoredCohort, ScoredEntry, SubgroupReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("both outcome classes are required")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{skipped} of {replicates} bootstrap replicates were degenerate")]
    TooManyDegenerate { skipped: usize, replicates: usize },
    #[error("all four cells of the 2x2 table are zero")]
    AllZero,
}

pub(crate) fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    Ok(())
}
