use serde::Serialize;

use super::{check_inputs, StatsError};

/// Scores sorted once, with runs of tied scores, for repeated weighted AUCs.
#[derive(Debug, Clone)]
pub struct SortedScores {
    order: Vec<usize>,
    /// `(start, end)` ranges in `order` sharing one score.
    ties: Vec<(usize, usize)>,
}

impl SortedScores {
    pub fn new(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut ties = Vec::new();
        let mut start = 0;
        for i in 1..=order.len() {
            if i == order.len() || scores[order[i]] != scores[order[start]] {
                ties.push((start, i));
                start = i;
            }
        }
        Self { order, ties }
    }

    /// `(score, positives, negatives)` per distinct score, ascending.
    pub fn tie_groups(&self, scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
        self.ties
            .iter()
            .map(|&(s, e)| {
                let pos = self.order[s..e].iter().filter(|&&i| labels[i]).count();
                (scores[self.order[s]], pos, e - s - pos)
            })
            .collect()
    }
}

/// Mann–Whitney AUC where entry `i` counts `weights[i]` times; ties count
/// one half. `None` when either class has zero total weight.
pub fn weighted_auc(sorted: &SortedScores, labels: &[bool], weights: &[u32]) -> Option<f64> {
    let (mut neg_below, mut num) = (0.0f64, 0.0f64);
    let mut pos_total = 0.0f64;
    for &(s, e) in &sorted.ties {
        let (mut p, mut n) = (0.0, 0.0);
        for &i in &sorted.order[s..e] {
            let w = f64::from(weights[i]);
            if labels[i] {
                p += w;
            } else {
                n += w;
            }
        }
        num += p * (neg_below + 0.5 * n);
        neg_below += n;
        pos_total += p;
    }
    (pos_total > 0.0 && neg_below > 0.0).then(|| num / (pos_total * neg_below))
}

/// Area under the ROC curve via the Mann–Whitney U statistic with midranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
    check_inputs(scores, labels)?;
    let ones = vec![1u32; scores.len()];
    weighted_auc(&SortedScores::new(scores), labels, &ones).ok_or(StatsError::SingleClass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points for `score ≥ threshold` at every distinct score,
/// from the highest threshold down, preceded by the empty classifier.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, StatsError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(StatsError::SingleClass);
    }
    let sorted = SortedScores::new(scores);
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0.0, 0.0);
    for &(s, e) in sorted.ties.iter().rev() {
        for &i in &sorted.order[s..e] {
            if labels[i] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        points.push(RocPoint { threshold: scores[sorted.order[s]], fpr: fp / neg, tpr: tp / pos });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[1.0, 2.0], &[true, true]), Err(StatsError::SingleClass));
        assert_eq!(auc(&[1.0], &[true, false]), Err(StatsError::LengthMismatch(1, 2)));
        assert_eq!(auc(&[f64::NAN, 1.0], &[true, false]), Err(StatsError::NonFinite(0)));
    }

    fn brute(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    fn cohort() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..60).prop_flat_map(|n| {
            (proptest::collection::vec(0u8..12, n), proptest::collection::vec(any::<bool>(), n))
                .prop_map(|(s, l)| (s.into_iter().map(f64::from).collect(), l))
        })
    }

    proptest! {
        #[test]
        fn matches_pairwise_count((scores, labels) in cohort()) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - brute(&scores, &labels)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn invariant_under_increasing_transform((scores, labels) in cohort()) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let t: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() + 2.0).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&t, &labels).unwrap());
        }

        #[test]
        fn flipping_labels_complements((scores, labels) in cohort()) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let sum = auc(&scores, &labels).unwrap() + auc(&scores, &flipped).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn weights_equal_duplication((scores, labels) in cohort(), w in proptest::collection::vec(0u32..4, 60)) {
            let w = &w[..scores.len()];
            let (mut s2, mut l2) = (Vec::new(), Vec::new());
            for i in 0..scores.len() {
                for _ in 0..w[i] {
                    s2.push(scores[i]);
                    l2.push(labels[i]);
                }
            }
            let weighted = weighted_auc(&SortedScores::new(&scores), &labels, w);
            match auc(&s2, &l2) {
                Ok(a) => prop_assert!((weighted.unwrap() - a).abs() < 1e-12),
                Err(_) => prop_assert!(weighted.is_none()),
            }
        }
    }

    #[test]
    fn roc_ends_at_one_one() {
        let pts = roc_curve(&[0.2, 0.4, 0.4, 0.9], &[false, true, false, true]).unwrap();
        assert_eq!(pts.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(pts.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        assert_eq!(pts.len(), 4);
    }
}
