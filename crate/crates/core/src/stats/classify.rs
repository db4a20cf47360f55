use serde::{Deserialize, Serialize};

use super::auc::SortedScores;
use super::{check_inputs, StatsError};

/// Two-sided 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Score cut-off for `score ≥ threshold` flagging as close to the top
/// `100 − p` percent as possible without exceeding it (nearest rank,
/// `k = ⌊n(100 − p)/100⌋`). Ties at the cut are never split: the threshold
/// moves up to the next distinct score instead. When every score is equal
/// everyone is flagged; when even the top tie group exceeds `k` nobody is.
pub fn threshold_at_percentile(scores: &[f64], percentile: f64) -> Result<f64, StatsError> {
    if scores.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(StatsError::InvalidArgument(format!("percentile {percentile} outside [0, 100]")));
    }
    let n = scores.len();
    let k = (n as f64 * (100.0 - percentile) / 100.0).floor() as usize;
    let mut desc = scores.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    if desc[0] == desc[n - 1] {
        return Ok(desc[0]);
    }
    // walk distinct values downwards while the flagged count stays within k
    let mut t = next_up(desc[0]);
    let mut i = 0;
    while i < n {
        let v = desc[i];
        let mut j = i;
        while j < n && desc[j] == v {
            j += 1;
        }
        if j > k {
            break;
        }
        t = v;
        i = j;
    }
    Ok(t)
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn from_predictions(high_risk: &[bool], labels: &[bool]) -> Result<Self, StatsError> {
        if high_risk.len() != labels.len() {
            return Err(StatsError::LengthMismatch(high_risk.len(), labels.len()));
        }
        Ok(Self::weighted(high_risk, labels, None))
    }

    pub fn at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self, StatsError> {
        check_inputs(scores, labels)?;
        let high: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
        Ok(Self::weighted(&high, labels, None))
    }

    /// Counts with entry `i` repeated `weights[i]` times.
    pub fn weighted(high_risk: &[bool], labels: &[bool], weights: Option<&[u32]>) -> Self {
        let mut m = Self::default();
        for (i, (&h, &y)) in high_risk.iter().zip(labels).enumerate() {
            let w = weights.map_or(1, |w| u64::from(w[i]));
            match (h, y) {
                (true, true) => m.tp += w,
                (true, false) => m.fp += w,
                (false, false) => m.tn += w,
                (false, true) => m.fn_ += w,
            }
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn ppv(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn npv(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fn_)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

/// Odds of the event among high-risk versus low-risk patients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Whether 0.5 was added to every cell because one of them was zero.
    pub corrected: bool,
}

/// Odds ratio `(tp·tn)/(fp·fn)` with a Woolf log-scale 95% interval.
pub fn odds_ratio(m: &ConfusionMatrix) -> Result<OddsRatio, StatsError> {
    if m.total() == 0 {
        return Err(StatsError::AllZero);
    }
    let corrected = m.tp == 0 || m.fp == 0 || m.tn == 0 || m.fn_ == 0;
    let add = if corrected { 0.5 } else { 0.0 };
    let [a, b, c, d] = [m.tp, m.fp, m.fn_, m.tn].map(|v| v as f64 + add);
    let log_or = (a * d / (b * c)).ln();
    let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
    Ok(OddsRatio {
        estimate: log_or.exp(),
        lower: (log_or - Z_975 * se).exp(),
        upper: (log_or + Z_975 * se).exp(),
        corrected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenPoint {
    pub threshold: f64,
    pub j: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Threshold maximising `sensitivity + specificity − 1` over all observed
/// scores. Ties prefer higher specificity, then the lower threshold.
pub fn youden_optimal(scores: &[f64], labels: &[bool]) -> Result<YoudenPoint, StatsError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(StatsError::SingleClass);
    }
    let sorted = SortedScores::new(scores);
    let mut desc: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (t, p, n) in sorted.tie_groups(scores, labels).into_iter().rev() {
        tp += p;
        fp += n;
        desc.push((t, tp, fp));
    }
    let mut best: Option<YoudenPoint> = None;
    for (t, tp, fp) in desc {
        let sens = tp as f64 / pos as f64;
        let spec = (neg - fp) as f64 / neg as f64;
        let cand = YoudenPoint { threshold: t, j: sens + spec - 1.0, sensitivity: sens, specificity: spec };
        let better = match best {
            None => true,
            Some(b) => {
                const EPS: f64 = 1e-12;
                cand.j > b.j + EPS
                    || ((cand.j - b.j).abs() <= EPS
                        && (cand.specificity > b.specificity
                            || (cand.specificity == b.specificity && cand.threshold < b.threshold)))
            }
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one threshold"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentile_threshold_examples() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = threshold_at_percentile(&scores, 85.0).unwrap();
        assert_eq!(t, 86.0);
        assert_eq!(scores.iter().filter(|&&s| s >= t).count(), 15);
        assert_eq!(threshold_at_percentile(&[0.3; 10], 85.0).unwrap(), 0.3);
        let t = threshold_at_percentile(&[0.1, 0.5, 0.5, 0.5], 85.0).unwrap();
        assert!(t > 0.5);
        assert_eq!(threshold_at_percentile(&[], 85.0), Err(StatsError::Empty));
        assert!(threshold_at_percentile(&[1.0], 101.0).is_err());
    }

    proptest! {
        #[test]
        fn percentile_flags_requested_share(scores in proptest::collection::hash_set(0u32..100_000, 2..400), p in 0.0f64..100.0) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let t = threshold_at_percentile(&scores, p).unwrap();
            let flagged = scores.iter().filter(|&&s| s >= t).count();
            let k = (scores.len() as f64 * (100.0 - p) / 100.0).floor() as usize;
            prop_assert_eq!(flagged, k);
        }

        #[test]
        fn heavy_ties_never_exceed_share(scores in proptest::collection::vec(0u8..4, 2..300), p in 0.0f64..100.0) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            prop_assume!(scores.iter().any(|&s| s != scores[0]));
            let t = threshold_at_percentile(&scores, p).unwrap();
            let flagged = scores.iter().filter(|&&s| s >= t).count();
            let k = (scores.len() as f64 * (100.0 - p) / 100.0).floor() as usize;
            prop_assert!(flagged <= k);
            // nearest rank: adding the next tie group would exceed k
            let next = scores.iter().filter(|&&s| s < t).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            if next.is_finite() {
                prop_assert!(scores.iter().filter(|&&s| s >= next).count() > k);
            }
        }

        #[test]
        fn odds_ratio_ci_brackets_estimate(a in 0u64..50, b in 0u64..50, c in 0u64..50, d in 0u64..50) {
            prop_assume!(a + b + c + d > 0);
            let or = odds_ratio(&ConfusionMatrix { tp: a, fp: b, fn_: c, tn: d }).unwrap();
            prop_assert!(or.lower <= or.estimate && or.estimate <= or.upper);
            prop_assert_eq!(or.corrected, a == 0 || b == 0 || c == 0 || d == 0);
        }
    }

    #[test]
    fn confusion_examples() {
        let m = ConfusionMatrix::at_threshold(&[0.9, 0.8, 0.2, 0.1], &[true, false, true, false], 0.5).unwrap();
        assert_eq!(m, ConfusionMatrix { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!(m.sensitivity(), Some(0.5));
        let none = ConfusionMatrix::at_threshold(&[0.1, 0.2], &[false, false], 0.5).unwrap();
        assert_eq!(none.sensitivity(), None);
        assert_eq!(none.ppv(), None);
        assert_eq!(none.specificity(), Some(1.0));
    }

    #[test]
    fn odds_ratio_examples() {
        let or = odds_ratio(&ConfusionMatrix { tp: 10, fp: 20, fn_: 5, tn: 40 }).unwrap();
        assert!((or.estimate - 4.0).abs() < 1e-12);
        let se = (1.0f64 / 10.0 + 1.0 / 20.0 + 1.0 / 5.0 + 1.0 / 40.0).sqrt();
        assert!((or.lower - (4.0f64.ln() - Z_975 * se).exp()).abs() < 1e-12);
        assert!(!or.corrected);
        let z = odds_ratio(&ConfusionMatrix { tp: 0, fp: 5, fn_: 3, tn: 10 }).unwrap();
        assert!(z.corrected);
        assert!((z.estimate - (0.5 * 10.5) / (5.5 * 3.5)).abs() < 1e-12);
        assert_eq!(odds_ratio(&ConfusionMatrix::default()), Err(StatsError::AllZero));
    }

    #[test]
    fn youden_examples() {
        let y = youden_optimal(&[0.1, 0.2, 0.3, 0.4], &[false, false, true, true]).unwrap();
        assert_eq!((y.threshold, y.j), (0.3, 1.0));
        // every cut gives J = 0: the highest specificity wins
        let y = youden_optimal(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(y.j, 0.0);
        let y = youden_optimal(&[0.2, 0.4, 0.6, 0.8], &[true, false, true, false]).unwrap();
        assert_eq!(y.specificity, 1.0 - 0.5);
    }
}
