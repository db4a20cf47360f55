use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_with, BootstrapConfig, ConfidenceInterval};
use super::StatsError;

/// Movements between an old and a new risk assignment, split by outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReclassificationTable {
    pub events_up: u64,
    pub events_down: u64,
    pub events_total: u64,
    pub nonevents_up: u64,
    pub nonevents_down: u64,
    pub nonevents_total: u64,
}

impl ReclassificationTable {
    /// `(up − down)/events + (down − up)/non-events`.
    pub fn nri(&self) -> Result<f64, StatsError> {
        Ok(self.event_nri()? + self.nonevent_nri()?)
    }

    pub fn event_nri(&self) -> Result<f64, StatsError> {
        if self.events_total == 0 {
            return Err(StatsError::SingleClass);
        }
        Ok((self.events_up as f64 - self.events_down as f64) / self.events_total as f64)
    }

    pub fn nonevent_nri(&self) -> Result<f64, StatsError> {
        if self.nonevents_total == 0 {
            return Err(StatsError::SingleClass);
        }
        Ok((self.nonevents_down as f64 - self.nonevents_up as f64) / self.nonevents_total as f64)
    }
}

fn tabulate(moves: &[Ordering], labels: &[bool], weights: Option<&[u32]>) -> ReclassificationTable {
    let mut t = ReclassificationTable::default();
    for (i, (&m, &y)) in moves.iter().zip(labels).enumerate() {
        let w = weights.map_or(1, |w| u64::from(w[i]));
        let (up, down, total) = if y {
            (&mut t.events_up, &mut t.events_down, &mut t.events_total)
        } else {
            (&mut t.nonevents_up, &mut t.nonevents_down, &mut t.nonevents_total)
        };
        *total += w;
        match m {
            Ordering::Greater => *up += w,
            Ordering::Less => *down += w,
            Ordering::Equal => {}
        }
    }
    t
}

fn check_len(a: usize, b: usize, labels: usize) -> Result<(), StatsError> {
    if a != labels || b != labels {
        return Err(StatsError::LengthMismatch(a.max(b), labels));
    }
    if labels == 0 {
        return Err(StatsError::Empty);
    }
    Ok(())
}

/// Two-category NRI: moving from low to high risk counts as up.
pub fn categorical_nri(old_high: &[bool], new_high: &[bool], labels: &[bool]) -> Result<ReclassificationTable, StatsError> {
    check_len(old_high.len(), new_high.len(), labels.len())?;
    let moves: Vec<Ordering> = old_high.iter().zip(new_high).map(|(o, n)| n.cmp(o)).collect();
    Ok(tabulate(&moves, labels, None))
}

/// Category-free NRI: any increase in predicted risk counts as up.
pub fn continuous_nri(old_scores: &[f64], new_scores: &[f64], labels: &[bool]) -> Result<ReclassificationTable, StatsError> {
    check_len(old_scores.len(), new_scores.len(), labels.len())?;
    if let Some(i) = old_scores.iter().chain(new_scores).position(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite(i % labels.len()));
    }
    let moves: Vec<Ordering> = old_scores.iter().zip(new_scores).map(|(o, n)| n.total_cmp(o)).collect();
    Ok(tabulate(&moves, labels, None))
}

/// Categorical NRI with a percentile bootstrap interval.
pub fn nri_ci(
    old_high: &[bool],
    new_high: &[bool],
    labels: &[bool],
    patients: &[&str],
    config: &BootstrapConfig,
) -> Result<(ReclassificationTable, ConfidenceInterval), StatsError> {
    let table = categorical_nri(old_high, new_high, labels)?;
    if patients.len() != labels.len() {
        return Err(StatsError::LengthMismatch(patients.len(), labels.len()));
    }
    let moves: Vec<Ordering> = old_high.iter().zip(new_high).map(|(o, n)| n.cmp(o)).collect();
    let ci = bootstrap_with(patients, config, table.nri()?, |w| tabulate(&moves, labels, Some(w)).nri().ok())?;
    Ok((table, ci))
}
