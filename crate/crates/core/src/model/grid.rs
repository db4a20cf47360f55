use serde::{Deserialize, Serialize};

use super::arch::ArchitectureConfig;
use super::flops::count_flops;
use super::train::{train, EpochRecord, PreparedData, TrainConfig};
use super::weights::ModelWeights;
use super::ModelError;

/// Stem dilation × stride pairs to train.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dilations: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dilations: vec![1, 2, 4, 8], strides: vec![1, 2, 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub dilation: usize,
    pub stride: usize,
    pub seed: u64,
    pub flops: u64,
    pub best_val_auc: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    pub best_dilation: usize,
    pub best_stride: usize,
}

/// Training seed of one cell, independent of evaluation order.
pub fn cell_seed(base: u64, dilation: usize, stride: usize) -> u64 {
    let mut z = base ^ ((dilation as u64) << 32 | stride as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Validation AUC rounded to six decimals, so float noise cannot decide a tie.
fn auc_key(auc: f64) -> i64 {
    (auc * 1e6).round() as i64
}

/// Index of the winning cell: highest validation AUC, then the smaller
/// dilation, then the smaller stride.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    (0..cells.len()).min_by(|&a, &b| {
        let (x, y) = (&cells[a], &cells[b]);
        auc_key(y.best_val_auc)
            .cmp(&auc_key(x.best_val_auc))
            .then(x.dilation.cmp(&y.dilation))
            .then(x.stride.cmp(&y.stride))
    })
}

/// Trains one model per grid cell and keeps the weights of the winner.
pub fn grid_search(
    data: &PreparedData,
    base: &ArchitectureConfig,
    spec: &GridSpec,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, usize, &EpochRecord),
) -> Result<(GridReport, ModelWeights), ModelError> {
    if spec.dilations.is_empty() || spec.strides.is_empty() {
        return Err(ModelError::InvalidConfig("grid needs at least one dilation and one stride".into()));
    }
    let mut cells = Vec::new();
    let mut best: Option<(GridCell, ModelWeights)> = None;
    for &d in &spec.dilations {
        for &s in &spec.strides {
            let arch = base.with_stem(d, s);
            let seed = cell_seed(config.seed, d, s);
            let cfg = TrainConfig { seed, ..config.clone() };
            let outcome = train(data, &arch, &cfg, |r| on_epoch(d, s, r))?;
            let cell = GridCell {
                dilation: d,
                stride: s,
                seed,
                flops: count_flops(&arch)?,
                best_val_auc: outcome.best_val_auc(),
                best_epoch: outcome.weights.meta.best_epoch,
                epochs_run: outcome.history.len(),
                history: outcome.history,
            };
            log::info!("grid d={d} s={s}: val AUC {:.4}", cell.best_val_auc);
            let wins = match &best {
                None => true,
                Some((b, _)) => select_best(&[b.clone(), cell.clone()]) == Some(1),
            };
            if wins {
                best = Some((cell.clone(), outcome.weights));
            }
            cells.push(cell);
        }
    }
    let (winner, weights) = best.expect("grid is non-empty");
    Ok((GridReport { cells, best_dilation: winner.dilation, best_stride: winner.stride }, weights))
}
