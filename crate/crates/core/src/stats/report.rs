use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::auc::{roc_curve, weighted_auc, SortedScores};
use super::bootstrap::{bootstrap_ci, BootstrapConfig, ConfidenceInterval};
use super::classify::{odds_ratio, ConfusionMatrix, OddsRatio};
use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    /// Unit being scored, usually a procedure id.
    pub id: String,
    pub patient_id: String,
    pub score: f64,
    pub label: bool,
}

/// Scores with outcomes and the patient each entry belongs to.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredCohort {
    pub entries: Vec<ScoredEntry>,
}

impl ScoredCohort {
    pub fn new(entries: Vec<ScoredEntry>) -> Result<Self, StatsError> {
        if let Some(i) = entries.iter().position(|e| !e.score.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn n_events(&self) -> usize {
        self.entries.iter().filter(|e| e.label).count()
    }

    pub fn n_patients(&self) -> usize {
        let mut p: Vec<&str> = self.entries.iter().map(|e| e.patient_id.as_str()).collect();
        p.sort_unstable();
        p.dedup();
        p.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { entries: indices.iter().map(|&i| self.entries[i].clone()).collect() }
    }
}

/// Statistic evaluated on weighted resamples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Metric {
    Auc,
    Sensitivity { threshold: f64 },
    Specificity { threshold: f64 },
    Ppv { threshold: f64 },
    Npv { threshold: f64 },
    OddsRatio { threshold: f64 },
}

type WeightedStatistic = Box<dyn Fn(&[u32]) -> Option<f64> + Send + Sync>;

impl Metric {
    pub(crate) fn prepare(self, cohort: &ScoredCohort) -> Result<WeightedStatistic, StatsError> {
        if cohort.is_empty() {
            return Err(StatsError::Empty);
        }
        let labels = cohort.labels();
        let scores = cohort.scores();
        let high = move |t: f64| scores.iter().map(|&s| s >= t).collect::<Vec<bool>>();
        let cm = move |high: Vec<bool>, labels: Vec<bool>, f: fn(&ConfusionMatrix) -> Option<f64>| -> WeightedStatistic {
            Box::new(move |w| f(&ConfusionMatrix::weighted(&high, &labels, Some(w))))
        };
        Ok(match self {
            Metric::Auc => {
                let sorted = SortedScores::new(&cohort.scores());
                Box::new(move |w| weighted_auc(&sorted, &labels, w))
            }
            Metric::Sensitivity { threshold } => cm(high(threshold), labels, ConfusionMatrix::sensitivity),
            Metric::Specificity { threshold } => cm(high(threshold), labels, ConfusionMatrix::specificity),
            Metric::Ppv { threshold } => cm(high(threshold), labels, ConfusionMatrix::ppv),
            Metric::Npv { threshold } => cm(high(threshold), labels, ConfusionMatrix::npv),
            Metric::OddsRatio { threshold } => {
                cm(high(threshold), labels, |m| odds_ratio(m).ok().map(|o| o.estimate))
            }
        })
    }
}

/// Discrimination and classification summary for one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub n: usize,
    pub n_events: usize,
    pub n_patients: usize,
    pub auc: Option<ConfidenceInterval>,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub odds_ratio: Option<OddsRatio>,
    /// Why a quantity is missing, if any is.
    pub notes: Vec<String>,
}

/// AUC with a bootstrap interval plus threshold metrics. Undefined
/// quantities are reported as `None` with a note rather than failing.
pub fn evaluate(
    name: &str,
    cohort: &ScoredCohort,
    threshold: f64,
    config: &BootstrapConfig,
) -> Result<MetricReport, StatsError> {
    if cohort.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut notes = Vec::new();
    let auc = match bootstrap_ci(cohort, Metric::Auc, config) {
        Ok(ci) => Some(ci),
        Err(e @ (StatsError::SingleClass | StatsError::TooManyDegenerate { .. })) => {
            notes.push(format!("auc: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let confusion = ConfusionMatrix::at_threshold(&cohort.scores(), &cohort.labels(), threshold)?;
    let odds = match odds_ratio(&confusion) {
        Ok(o) => Some(o),
        Err(e) => {
            notes.push(format!("odds ratio: {e}"));
            None
        }
    };
    Ok(MetricReport {
        name: name.to_string(),
        n: cohort.len(),
        n_events: cohort.n_events(),
        n_patients: cohort.n_patients(),
        auc,
        threshold,
        confusion,
        sensitivity: confusion.sensitivity(),
        specificity: confusion.specificity(),
        ppv: confusion.ppv(),
        npv: confusion.npv(),
        odds_ratio: odds,
        notes,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn row(&self) -> String {
        let auc = self.auc.map_or_else(
            || "n/a".to_string(),
            |c| format!("{:.3} ({:.3}-{:.3})", c.estimate, c.lower, c.upper),
        );
        let or = self.odds_ratio.map_or_else(
            || "n/a".to_string(),
            |o| format!("{:.2} ({:.2}-{:.2}){}", o.estimate, o.lower, o.upper, if o.corrected { "*" } else { "" }),
        );
        format!(
            "{:<24} {:>6} {:>6}  {:<22} {:>6} {:>6} {:>6} {:>6}  {}",
            self.name,
            self.n,
            self.n_events,
            auc,
            opt(self.sensitivity),
            opt(self.specificity),
            opt(self.ppv),
            opt(self.npv),
            or
        )
    }

    pub fn text_header() -> String {
        format!(
            "{:<24} {:>6} {:>6}  {:<22} {:>6} {:>6} {:>6} {:>6}  {}",
            "cohort", "n", "events", "AUC (95% CI)", "sens", "spec", "ppv", "npv", "OR (95% CI)"
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n{}\n", Self::text_header(), self.row());
        for n in &self.notes {
            let _ = writeln!(s, "  note: {n}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub overall: MetricReport,
    pub subgroups: Vec<MetricReport>,
}

impl SubgroupReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = MetricReport::text_header();
        s.push('\n');
        for r in std::iter::once(&self.overall).chain(&self.subgroups) {
            s.push_str(&r.row());
            s.push('\n');
        }
        if self.subgroups.iter().chain([&self.overall]).any(|r| r.odds_ratio.is_some_and(|o| o.corrected)) {
            s.push_str("* 0.5 added to every cell because one was zero\n");
        }
        s
    }
}

/// Overall report plus one per named subgroup (indices into `cohort`).
/// Empty subgroups are skipped.
pub fn subgroup_report(
    cohort: &ScoredCohort,
    subgroups: &[(String, Vec<usize>)],
    threshold: f64,
    config: &BootstrapConfig,
) -> Result<SubgroupReport, StatsError> {
    let overall = evaluate("overall", cohort, threshold, config)?;
    let mut reports = Vec::new();
    for (name, idx) in subgroups {
        if idx.is_empty() {
            continue;
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= cohort.len()) {
            return Err(StatsError::InvalidArgument(format!("subgroup {name} index {bad} out of range")));
        }
        reports.push(evaluate(name, &cohort.subset(idx), threshold, config)?);
    }
    Ok(SubgroupReport { overall, subgroups: reports })
}

/// `threshold,fpr,tpr` rows from the strictest threshold down.
pub fn roc_csv(scores: &[f64], labels: &[bool]) -> Result<String, StatsError> {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in roc_curve(scores, labels)? {
        let t = if p.threshold.is_finite() { format!("{}", p.threshold) } else { "inf".into() };
        let _ = writeln!(s, "{t},{},{}", p.fpr, p.tpr);
    }
    Ok(s)
}
