//! Perturbation importance over (lead, segment) cells of a waveform.
//!
//! Each perturbation masks one random contiguous span of one lead and
//! records the absolute change in predicted risk. A cell's importance is the
//! mean change over the perturbations that touched it.

mod heatmap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Predictor, CLINICAL_FEATURES};
use crate::waveform::{preprocess, ClinicalProfile, EcgRecord};

pub use heatmap::{render_heatmap_data, HeatmapData, LegendEntry};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("importance map has no populated cells")]
    EmptyMap,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(ModelError),
}

impl From<ModelError> for ExplainError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::FeatureMismatch(m) => Self::FeatureMismatch(m),
            other => Self::Model(other),
        }
    }
}

/// Anything that maps a lead-major waveform to a risk in [0, 1].
pub trait RiskModel: Sync {
    fn leads(&self) -> usize;
    fn samples_per_lead(&self) -> usize;
    fn predict_batch(&self, inputs: &[&[f32]]) -> Result<Vec<f64>, ExplainError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Replace the span with zeros (the baseline in normalized space).
    #[default]
    Zero,
    /// Replace the span with Gaussian noise of the lead's mean and spread.
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub n_samples: usize,
    pub mask_fraction: f64,
    pub seed: u64,
    pub mask_mode: MaskMode,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { n_samples: 1000, mask_fraction: 0.005, seed: 0, mask_mode: MaskMode::Zero }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMap {
    pub leads: usize,
    pub segments: usize,
    pub segment_len: usize,
    pub n_samples: usize,
    pub base_prediction: f64,
    /// Lead-major; `None` for cells no perturbation touched.
    pub importance: Vec<Option<f64>>,
    pub counts: Vec<u32>,
}

impl ImportanceMap {
    pub fn get(&self, lead: usize, segment: usize) -> Option<f64> {
        self.importance[lead * self.segments + segment]
    }

    pub fn absent_fraction(&self) -> f64 {
        self.importance.iter().filter(|v| v.is_none()).count() as f64 / self.importance.len() as f64
    }

    /// Populated cells as `(lead, segment, importance)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.importance.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i / self.segments, i % self.segments, v)))
    }

    /// `lead,segment_start,importance` rows; absent cells leave the value empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lead,segment_start,importance\n");
        for (i, v) in self.importance.iter().enumerate() {
            let (lead, seg) = (i / self.segments, i % self.segments);
            let value = v.map(|v| format!("{v:e}")).unwrap_or_default();
            out.push_str(&format!("{lead},{},{value}\n", seg * self.segment_len));
        }
        out
    }
}

const CHUNK: usize = 16;

/// Perturbation importance of `input` (lead-major, already in the model's
/// input space). Deterministic for a given seed whatever the thread count:
/// perturbation `i` draws from its own RNG stream and results are reduced in
/// index order.
pub fn perturbation_importance(
    model: &dyn RiskModel,
    input: &[f32],
    config: &ExplainConfig,
) -> Result<ImportanceMap, ExplainError> {
    let (leads, len) = (model.leads(), model.samples_per_lead());
    if input.len() != leads * len {
        return Err(ExplainError::FeatureMismatch(format!("input has {} samples, expected {}", input.len(), leads * len)));
    }
    if config.n_samples == 0 || !(config.mask_fraction > 0.0 && config.mask_fraction <= 1.0) {
        return Err(ExplainError::InvalidArgument(format!(
            "need n_samples ≥ 1 and mask_fraction in (0, 1], got {} and {}",
            config.n_samples, config.mask_fraction
        )));
    }
    let span = ((config.mask_fraction * len as f64).round() as usize).clamp(1, len);
    let segments = len.div_ceil(span);
    let base = model.predict_batch(&[input])?[0];
    let lead_stats: Vec<(f32, f32)> = input
        .chunks_exact(len)
        .map(|x| {
            let mean = x.iter().map(|&v| f64::from(v)).sum::<f64>() / len as f64;
            let var = x.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / len as f64;
            (mean as f32, var.sqrt() as f32)
        })
        .collect();

    let draw = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let lead = rng.gen_range(0..leads);
        let start = rng.gen_range(0..=len - span);
        let mut x = input.to_vec();
        let target = &mut x[lead * len + start..lead * len + start + span];
        match config.mask_mode {
            MaskMode::Zero => target.fill(0.0),
            MaskMode::Noise => {
                let (mean, sd) = lead_stats[lead];
                for v in target {
                    *v = mean + sd * rng.sample::<f32, _>(StandardNormal);
                }
            }
        }
        (lead, start, x)
    };
    let chunks: Vec<Vec<(usize, usize, f64)>> = (0..config.n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let draws: Vec<_> = (c * CHUNK..((c + 1) * CHUNK).min(config.n_samples)).map(draw).collect();
            let refs: Vec<&[f32]> = draws.iter().map(|d| d.2.as_slice()).collect();
            let preds = model.predict_batch(&refs)?;
            Ok(draws.iter().zip(preds).map(|(d, p)| (d.0, d.1, (p - base).abs())).collect())
        })
        .collect::<Result<_, ExplainError>>()?;

    let mut sums = vec![0.0; leads * segments];
    let mut counts = vec![0u32; leads * segments];
    for (lead, start, delta) in chunks.into_iter().flatten() {
        for seg in start / span..=(start + span - 1) / span {
            sums[lead * segments + seg] += delta;
            counts[lead * segments + seg] += 1;
        }
    }
    let importance = sums.iter().zip(&counts).map(|(&s, &c)| (c > 0).then(|| s / f64::from(c))).collect();
    Ok(ImportanceMap { leads, segments, segment_len: span, n_samples: config.n_samples, base_prediction: base, importance, counts })
}

/// A [`Predictor`] bound to one patient's clinical vector, operating on
/// preprocessed waveforms.
pub struct BoundPredictor<'a> {
    predictor: &'a Predictor,
    clinical: Option<[f32; CLINICAL_FEATURES]>,
}

impl<'a> BoundPredictor<'a> {
    pub fn new(predictor: &'a Predictor, clinical: Option<&ClinicalProfile>) -> Result<Self, ExplainError> {
        Ok(Self { predictor, clinical: predictor.clinical_input(clinical)? })
    }
}

impl RiskModel for BoundPredictor<'_> {
    fn leads(&self) -> usize {
        self.predictor.net().config().input_leads
    }

    fn samples_per_lead(&self) -> usize {
        self.predictor.net().config().input_len
    }

    fn predict_batch(&self, inputs: &[&[f32]]) -> Result<Vec<f64>, ExplainError> {
        let clinical = self.clinical.as_ref().map(|c| c.as_slice());
        inputs.iter().map(|x| Ok(self.predictor.predict_samples(x, clinical)?)).collect()
    }
}

/// Preprocesses `ecg` as the predictor expects and maps its importance.
pub fn explain_ecg(
    predictor: &Predictor,
    ecg: &EcgRecord,
    clinical: Option<&ClinicalProfile>,
    config: &ExplainConfig,
) -> Result<ImportanceMap, ExplainError> {
    let model = BoundPredictor::new(predictor, clinical)?;
    let clean = preprocess(ecg, predictor.preprocess_config()).map_err(|e| ExplainError::Model(e.into()))?;
    perturbation_importance(&model, clean.samples(), config)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        weights: Vec<f32>,
    }

    impl RiskModel for Linear {
        fn leads(&self) -> usize {
            12
        }
        fn samples_per_lead(&self) -> usize {
            5000
        }
        fn predict_batch(&self, inputs: &[&[f32]]) -> Result<Vec<f64>, ExplainError> {
            Ok(inputs.iter().map(|x| x.iter().zip(&self.weights).map(|(&a, &w)| f64::from(a * w)).sum()).collect())
        }
    }

    fn signal() -> Vec<f32> {
        (0..60_000).map(|i| 1.0 + ((i % 5000) as f32 * 0.01).sin()).collect()
    }

    #[test]
    fn constant_model_has_no_importance() {
        let m = Linear { weights: vec![0.0; 60_000] };
        let map = perturbation_importance(&m, &signal(), &ExplainConfig::default()).unwrap();
        assert_eq!((map.leads, map.segments, map.segment_len), (12, 200, 25));
        assert!(map.cells().all(|(_, _, v)| v <= 1e-6));
    }

    #[test]
    fn mean_of_lead_one_window_is_found() {
        let mut weights = vec![0.0; 60_000];
        for w in &mut weights[5000 + 100..5000 + 200] {
            *w = 0.01;
        }
        let m = Linear { weights };
        let cfg = ExplainConfig { n_samples: 4000, ..Default::default() };
        let map = perturbation_importance(&m, &signal(), &cfg).unwrap();
        let mut cells: Vec<_> = map.cells().collect();
        cells.sort_by(|a, b| b.2.total_cmp(&a.2));
        for &(lead, seg, v) in cells.iter().take(4) {
            assert!(v > 0.0);
            assert_eq!(lead, 1);
            assert!((4..8).contains(&seg), "segment {seg}");
        }
        for (lead, _, v) in map.cells() {
            if lead != 1 {
                assert!(v <= 1e-6);
            }
        }
    }

    #[test]
    fn deterministic_and_denser_with_more_samples() {
        let m = Linear { weights: (0..60_000).map(|i| (i % 7) as f32 * 1e-4).collect() };
        let x = signal();
        for mode in [MaskMode::Zero, MaskMode::Noise] {
            let cfg = ExplainConfig { n_samples: 300, seed: 5, mask_mode: mode, ..Default::default() };
            let a = perturbation_importance(&m, &x, &cfg).unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
            let b = pool.install(|| perturbation_importance(&m, &x, &cfg)).unwrap();
            assert_eq!(a, b);
            let more = perturbation_importance(&m, &x, &ExplainConfig { n_samples: 600, ..cfg }).unwrap();
            assert!(more.absent_fraction() <= a.absent_fraction());
        }
    }

    #[test]
    fn rejects_bad_input() {
        let m = Linear { weights: vec![0.0; 60_000] };
        assert!(matches!(
            perturbation_importance(&m, &[0.0; 10], &ExplainConfig::default()),
            Err(ExplainError::FeatureMismatch(_))
        ));
        let cfg = ExplainConfig { n_samples: 0, ..Default::default() };
        assert!(matches!(perturbation_importance(&m, &signal(), &cfg), Err(ExplainError::InvalidArgument(_))));
    }

    #[test]
    fn csv_lists_every_cell() {
        let m = Linear { weights: vec![1e-3; 60_000] };
        let map = perturbation_importance(&m, &signal(), &ExplainConfig { n_samples: 50, ..Default::default() }).unwrap();
        let csv = map.to_csv();
        assert_eq!(csv.lines().count(), 1 + 12 * 200);
        assert!(csv.lines().nth(2).unwrap().starts_with("0,25,"));
    }
}
