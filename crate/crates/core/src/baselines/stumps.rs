use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::autodiff::stable_sigmoid;
use crate::container::{Container, Section};

/// Depth-one tree: `left` when `x[feature] ≤ threshold`, else `right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    pub fn output(&self, row: &[f64]) -> f64 {
        if row[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StumpConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    /// Recorded with the model; fitting itself is an exhaustive search and
    /// draws no random numbers.
    pub seed: u64,
}

impl Default for StumpConfig {
    fn default() -> Self {
        Self { rounds: 200, learning_rate: 0.1, seed: 0 }
    }
}

/// Additive logistic model `sigmoid(base + ν·Σ stumps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StumpEnsemble {
    pub width: usize,
    pub base: f64,
    pub learning_rate: f64,
    pub stumps: Vec<Stump>,
    pub seed: u64,
}

fn check_rows(rows: &[Vec<f64>], width: Option<usize>) -> Result<usize, BaselineError> {
    let w = match width {
        Some(w) => w,
        None => rows.first().map_or(0, Vec::len),
    };
    for (r, row) in rows.iter().enumerate() {
        if row.len() != w {
            return Err(BaselineError::WidthMismatch { expected: w, got: row.len() });
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(BaselineError::NonFinite { row: r, col: c });
        }
    }
    Ok(w)
}

impl StumpEnsemble {
    /// Gradient boosting on logistic loss. Each round fits the stump that
    /// best approximates the negative gradient `y − p` in squared error over
    /// every feature and every midpoint between consecutive distinct values;
    /// ties go to the lowest feature, then the lowest threshold.
    pub fn fit(rows: &[Vec<f64>], labels: &[bool], config: &StumpConfig) -> Result<Self, BaselineError> {
        if rows.is_empty() {
            return Err(BaselineError::EmptyFeatures);
        }
        if rows.len() != labels.len() {
            return Err(BaselineError::LengthMismatch(rows.len(), labels.len()));
        }
        let width = check_rows(rows, None)?;
        if width == 0 {
            return Err(BaselineError::EmptyFeatures);
        }
        let pos = labels.iter().filter(|&&l| l).count();
        if pos < 2 || labels.len() - pos < 2 {
            return Err(BaselineError::SingleClass);
        }
        if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
            return Err(BaselineError::InvalidArgument(format!("learning rate {}", config.learning_rate)));
        }
        let n = rows.len();
        let prevalence = pos as f64 / n as f64;
        let base = (prevalence / (1.0 - prevalence)).ln();
        let orders: Vec<Vec<usize>> = (0..width)
            .map(|f| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
                o
            })
            .collect();
        let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let mut margin = vec![base; n];
        let mut stumps = Vec::new();
        for _ in 0..config.rounds {
            let g: Vec<f64> = margin.iter().zip(&y).map(|(&m, &t)| t - stable_sigmoid(m)).collect();
            let total: f64 = g.iter().sum();
            let mut best: Option<(f64, Stump)> = None;
            for (f, order) in orders.iter().enumerate() {
                let mut left_sum = 0.0;
                for k in 0..n - 1 {
                    left_sum += g[order[k]];
                    let (a, b) = (rows[order[k]][f], rows[order[k + 1]][f]);
                    if a == b {
                        continue;
                    }
                    let nl = (k + 1) as f64;
                    let nr = (n - k - 1) as f64;
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / nl + right_sum * right_sum / nr;
                    if best.as_ref().map_or(true, |(bg, _)| gain > *bg) {
                        let stump = Stump { feature: f, threshold: a + (b - a) / 2.0, left: left_sum / nl, right: right_sum / nr };
                        best = Some((gain, stump));
                    }
                }
            }
            let Some((_, stump)) = best else { break };
            for (m, row) in margin.iter_mut().zip(rows) {
                *m += config.learning_rate * stump.output(row);
            }
            stumps.push(stump);
        }
        Ok(Self { width, base, learning_rate: config.learning_rate, stumps, seed: config.seed })
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base + self.learning_rate * self.stumps.iter().map(|s| s.output(row)).sum::<f64>()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, BaselineError> {
        check_rows(rows, Some(self.width))?;
        Ok(rows.iter().map(|r| stable_sigmoid(self.margin(r))).collect())
    }

    /// Mean logistic loss on `rows`.
    pub fn log_loss(&self, rows: &[Vec<f64>], labels: &[bool]) -> Result<f64, BaselineError> {
        let p = self.predict(rows)?;
        let eps = 1e-15;
        let total: f64 = p
            .iter()
            .zip(labels)
            .map(|(&q, &y)| {
                let q = q.clamp(eps, 1.0 - eps);
                if y { -q.ln() } else { -(1.0 - q).ln() }
            })
            .sum();
        Ok(total / p.len().max(1) as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        Container {
            section: Section::Stumps,
            header: serde_json::to_string(self).expect("ensemble serializes"),
            records: Vec::new(),
        }
        .encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BaselineError> {
        let c = Container::decode(bytes)?.expect_section(Section::Stumps)?;
        let e: Self = serde_json::from_str(&c.header)?;
        if e.stumps.iter().any(|s| !(s.left.is_finite() && s.right.is_finite()) || s.feature >= e.width) {
            return Err(BaselineError::InvalidArgument("ensemble has invalid stumps".into()));
        }
        Ok(e)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BaselineError> {
        std::fs::write(path, self.to_bytes()).map_err(crate::container::ContainerError::from)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BaselineError> {
        Self::from_bytes(&std::fs::read(path).map_err(crate::container::ContainerError::from)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::auc;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn separable_data_reaches_full_auc() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let m = StumpEnsemble::fit(&col(&x), &y, &StumpConfig { rounds: 10, ..Default::default() }).unwrap();
        assert_eq!(auc(&m.predict(&col(&x)).unwrap(), &y).unwrap(), 1.0);
        assert_eq!(m.stumps[0].threshold, 9.5);
    }

    #[test]
    fn one_round_changes_prediction_only_across_the_split() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [false, false, true, false, true, true];
        let m = StumpEnsemble::fit(&col(&x), &y, &StumpConfig { rounds: 1, ..Default::default() }).unwrap();
        let p = m.predict(&col(&x)).unwrap();
        let t = m.stumps[0].threshold;
        let left: Vec<f64> = p.iter().zip(&x).filter(|(_, &v)| v <= t).map(|(&q, _)| q).collect();
        let right: Vec<f64> = p.iter().zip(&x).filter(|(_, &v)| v > t).map(|(&q, _)| q).collect();
        assert!(left.windows(2).all(|w| w[0] == w[1]) && right.windows(2).all(|w| w[0] == w[1]));
        assert!(left[0] < 0.5 && right[0] > 0.5);
    }

    #[test]
    fn empty_ensemble_predicts_prevalence() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [true, false, true, false, false];
        let m = StumpEnsemble::fit(&col(&x), &y, &StumpConfig { rounds: 0, ..Default::default() }).unwrap();
        for p in m.predict(&col(&x)).unwrap() {
            assert!((p - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_built_two_stump_model() {
        let m = StumpEnsemble {
            width: 2,
            base: -1.0,
            learning_rate: 0.5,
            stumps: vec![
                Stump { feature: 0, threshold: 1.5, left: -2.0, right: 2.0 },
                Stump { feature: 1, threshold: 0.0, left: 1.0, right: -1.0 },
            ],
            seed: 0,
        };
        let rows = vec![vec![1.0, -1.0], vec![2.0, -1.0], vec![2.0, 3.0]];
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let expected = [sig(-1.0 + 0.5 * (-2.0 + 1.0)), sig(-1.0 + 0.5 * (2.0 + 1.0)), sig(-1.0 + 0.5 * (2.0 - 1.0))];
        for (p, e) in m.predict(&rows).unwrap().iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!(matches!(m.predict(&[vec![1.0]]), Err(BaselineError::WidthMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn increasing_stumps_give_monotone_predictions() {
        let m = StumpEnsemble {
            width: 1,
            base: 0.0,
            learning_rate: 0.3,
            stumps: (0..5).map(|i| Stump { feature: 0, threshold: f64::from(i), left: -0.5, right: 0.7 }).collect(),
            seed: 0,
        };
        let xs: Vec<f64> = (-10..60).map(|i| f64::from(i) / 10.0).collect();
        let p = m.predict(&col(&xs)).unwrap();
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn errors() {
        assert!(matches!(StumpEnsemble::fit(&col(&[1.0, 2.0, 3.0]), &[true, false, false], &StumpConfig::default()),
            Err(BaselineError::SingleClass)));
        assert!(matches!(StumpEnsemble::fit(&[], &[], &StumpConfig::default()), Err(BaselineError::EmptyFeatures)));
        let rows = vec![vec![]; 4];
        assert!(matches!(StumpEnsemble::fit(&rows, &[true, true, false, false], &StumpConfig::default()),
            Err(BaselineError::EmptyFeatures)));
    }

    fn random_problem(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let labels = rows.iter().map(|r| rng.gen::<f64>() < 1.0 / (1.0 + (-(r[0] - 0.5 * r[2])).exp())).collect();
        (rows, labels)
    }

    #[test]
    fn training_loss_never_increases() {
        let (rows, y) = random_problem(1, 200);
        let full = StumpEnsemble::fit(&rows, &y, &StumpConfig { rounds: 60, ..Default::default() }).unwrap();
        let mut prev = f64::INFINITY;
        for r in 0..=full.stumps.len() {
            let partial = StumpEnsemble { stumps: full.stumps[..r].to_vec(), ..full.clone() };
            let loss = partial.log_loss(&rows, &y).unwrap();
            assert!(loss <= prev + 1e-12, "round {r}: {loss} > {prev}");
            prev = loss;
        }
    }

    #[test]
    fn invariant_to_monotone_feature_transforms() {
        let (rows, y) = random_problem(2, 80);
        let cfg = StumpConfig { rounds: 25, ..Default::default() };
        let a = StumpEnsemble::fit(&rows, &y, &cfg).unwrap();
        let t: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0].exp(), r[1] * 3.0 + 1.0, r[2].powi(3)]).collect();
        let b = StumpEnsemble::fit(&t, &y, &cfg).unwrap();
        let (pa, pb) = (a.predict(&rows).unwrap(), b.predict(&t).unwrap());
        for (x, z) in pa.iter().zip(&pb) {
            assert!((x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn permuted_labels_give_chance_auc() {
        let (rows, y) = random_problem(3, 500);
        let mut y = y;
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
        let mut scores = vec![0.0; rows.len()];
        for fold in 0..5 {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|i| i % 5 != fold);
            let tr: Vec<Vec<f64>> = train.iter().map(|&i| rows[i].clone()).collect();
            let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let m = StumpEnsemble::fit(&tr, &ty, &StumpConfig::default()).unwrap();
            let te: Vec<Vec<f64>> = test.iter().map(|&i| rows[i].clone()).collect();
            for (&i, p) in test.iter().zip(m.predict(&te).unwrap()) {
                scores[i] = p;
            }
        }
        let a = auc(&scores, &y).unwrap();
        assert!((a - 0.5).abs() <= 0.1, "held-out AUC {a}");
    }

    #[test]
    fn container_round_trip() {
        let (rows, y) = random_problem(5, 50);
        let m = StumpEnsemble::fit(&rows, &y, &StumpConfig { rounds: 5, ..Default::default() }).unwrap();
        assert_eq!(StumpEnsemble::from_bytes(&m.to_bytes()).unwrap(), m);
    }
}
