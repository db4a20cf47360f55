use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureConfig, CLINICAL_FEATURES};
use super::network::{InferenceNet, PreOpNet};
use super::predictor::{clinical_features, Predictor};
use super::weights::{ModelWeights, TrainingMeta};
use super::ModelError;
use crate::autodiff::{AdamConfig, AdamState, BnMode, Tape, Tensor};
use crate::stats::{auc, threshold_at_percentile, ScoredCohort, ScoredEntry};
use crate::waveform::{
    link_ecgs_to_procedures, preprocess, DatasetManifest, EcgId, LinkMode, PreprocessConfig, Split, Target,
    WaveformSource, N_LEADS, N_SAMPLES,
};

pub const MIN_LEARNING_RATE: f64 = 1e-4;
pub const MAX_LEARNING_RATE: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Training stops once this many consecutive epochs fail to improve the
    /// validation AUC and one more does too.
    pub patience: usize,
    pub seed: u64,
    pub target: Target,
    pub threshold_percentile: f64,
    pub adam: AdamConfig,
    pub preprocess: PreprocessConfig,
    /// Accept learning rates outside `[1e-4, 5e-3]`.
    pub allow_any_learning_rate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            target: Target::Mace,
            threshold_percentile: 85.0,
            adam: AdamConfig::default(),
            preprocess: PreprocessConfig::default(),
            allow_any_learning_rate: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        let lr = self.learning_rate;
        if !(lr > 0.0 && lr.is_finite()) {
            return bad(format!("learning rate {lr} must be positive"));
        }
        if !self.allow_any_learning_rate && !(MIN_LEARNING_RATE..=MAX_LEARNING_RATE).contains(&lr) {
            return bad(format!("learning rate {lr} outside [{MIN_LEARNING_RATE}, {MAX_LEARNING_RATE}]"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        if !(0.0..=100.0).contains(&self.threshold_percentile) {
            return bad(format!("threshold percentile {} outside [0, 100]", self.threshold_percentile));
        }
        self.preprocess.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Example {
    signal: usize,
    clinical: [f32; CLINICAL_FEATURES],
    label: bool,
    procedure_id: String,
    patient_id: String,
}

/// Preprocessed waveforms and labelled examples for one target, shared by
/// every training run (for example across grid cells).
#[derive(Debug, Clone)]
pub struct PreparedData {
    target: Target,
    preprocess: PreprocessConfig,
    signals: Vec<Vec<f32>>,
    /// Training-mode pairs of the training split.
    train: Vec<Example>,
    /// Evaluation-mode pairs of the validation split.
    val: Vec<Example>,
    /// Evaluation-mode pairs of the training split, used for the threshold.
    calibration: Vec<Example>,
}

impl PreparedData {
    pub fn new(
        manifest: &DatasetManifest,
        source: &dyn WaveformSource,
        target: Target,
        preprocess_config: &PreprocessConfig,
    ) -> Result<Self, ModelError> {
        manifest.validate()?;
        preprocess_config.validate()?;
        let outcomes = manifest.outcome_index();
        let profiles = manifest.profile_index();
        let ecgs = manifest.ecg_index();
        let mut signal_ids: BTreeMap<EcgId, usize> = BTreeMap::new();

        let mut collect = |mode: LinkMode, split: Split| -> Result<Vec<Example>, ModelError> {
            let mut out = Vec::new();
            for pair in link_ecgs_to_procedures(manifest, mode).pairs {
                if manifest.split_of(&pair.patient_id) != Some(split) {
                    continue;
                }
                let Some(outcome) = outcomes.get(&pair.procedure_id) else {
                    log::warn!("procedure {} has no outcome record; skipped", pair.procedure_id);
                    continue;
                };
                let profile = profiles.get(&pair.patient_id).ok_or_else(|| {
                    ModelError::Waveform(crate::waveform::WaveformError::Manifest(format!(
                        "patient {} has no clinical profile",
                        pair.patient_id
                    )))
                })?;
                let next = signal_ids.len();
                let signal = *signal_ids.entry(pair.ecg_id.clone()).or_insert(next);
                out.push(Example {
                    signal,
                    clinical: clinical_features(profile),
                    label: outcome.label(target),
                    procedure_id: pair.procedure_id.to_string(),
                    patient_id: pair.patient_id.to_string(),
                });
            }
            Ok(out)
        };
        let train = collect(LinkMode::Training, Split::Train)?;
        let val = collect(LinkMode::Evaluation, Split::Val)?;
        let calibration = collect(LinkMode::Evaluation, Split::Train)?;
        for (split, set) in [(Split::Train, &train), (Split::Val, &val)] {
            if set.is_empty() {
                return Err(ModelError::EmptySplit(split));
            }
            let events = set.iter().filter(|e| e.label).count();
            if events == 0 || events == set.len() {
                return Err(ModelError::SingleClassSplit(split));
            }
        }

        let mut order: Vec<(&EcgId, usize)> = signal_ids.iter().map(|(k, &v)| (k, v)).collect();
        order.sort_by_key(|&(_, v)| v);
        let signals = order
            .par_iter()
            .map(|(id, _)| {
                let entry = ecgs.get(id).expect("linked ECG is in the manifest");
                let record = source.load(entry)?;
                Ok(preprocess(&record, preprocess_config)?.samples().to_vec())
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Self { target, preprocess: *preprocess_config, signals, train, val, calibration })
    }

    pub fn target(&self) -> Target {
        self.target
    }

    /// `(training pairs, validation pairs, training events, validation events)`.
    pub fn summary(&self) -> (usize, usize, usize, usize) {
        let ev = |s: &[Example]| s.iter().filter(|e| e.label).count();
        (self.train.len(), self.val.len(), ev(&self.train), ev(&self.val))
    }

    fn score(&self, net: &InferenceNet, set: &[Example], clinical: bool) -> Result<Vec<f64>, ModelError> {
        set.iter()
            .map(|e| net.probability(&self.signals[e.signal], clinical.then_some(&e.clinical[..])))
            .collect()
    }

    fn cohort(set: &[Example], scores: Vec<f64>) -> Result<ScoredCohort, ModelError> {
        let entries = set
            .iter()
            .zip(scores)
            .map(|(e, score)| ScoredEntry {
                id: e.procedure_id.clone(),
                patient_id: e.patient_id.clone(),
                score,
                label: e.label,
            })
            .collect();
        Ok(ScoredCohort::new(entries)?)
    }

    /// Validation-split scores of a trained model.
    pub fn validation_cohort(&self, weights: &ModelWeights) -> Result<ScoredCohort, ModelError> {
        let p = weights.predictor();
        let scores = self.score(p.net(), &self.val, p.uses_clinical())?;
        Self::cohort(&self.val, scores)
    }
}

/// Scores every evaluation-mode pair of `split` (one ECG per procedure).
pub fn score_split(
    manifest: &DatasetManifest,
    source: &dyn WaveformSource,
    predictor: &Predictor,
    target: Target,
    split: Split,
) -> Result<ScoredCohort, ModelError> {
    let outcomes = manifest.outcome_index();
    let profiles = manifest.profile_index();
    let ecgs = manifest.ecg_index();
    let pairs: Vec<_> = link_ecgs_to_procedures(manifest, LinkMode::Evaluation)
        .pairs
        .into_iter()
        .filter(|p| manifest.split_of(&p.patient_id) == Some(split) && outcomes.contains_key(&p.procedure_id))
        .collect();
    let entries = pairs
        .par_iter()
        .map(|pair| {
            let record = source.load(ecgs[&pair.ecg_id])?;
            let score = predictor.predict(&record, profiles.get(&pair.patient_id).copied())?;
            Ok(ScoredEntry {
                id: pair.procedure_id.to_string(),
                patient_id: pair.patient_id.to_string(),
                score,
                label: outcomes[&pair.procedure_id].label(target),
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(ScoredCohort::new(entries)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the best validation AUC.
    pub weights: ModelWeights,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn best_val_auc(&self) -> f64 {
        self.weights.meta.best_val_auc.unwrap_or(f64::NAN)
    }
}

/// Minibatch ADAM on binary cross-entropy with early stopping on the
/// validation AUC. Deterministic for a given seed.
pub fn train(
    data: &PreparedData,
    arch: &ArchitectureConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    arch.validate()?;
    if arch.input_leads != N_LEADS || arch.input_len != N_SAMPLES {
        return Err(ModelError::InvalidConfig(format!(
            "training data is {N_LEADS} x {N_SAMPLES}, architecture expects {} x {}",
            arch.input_leads, arch.input_len
        )));
    }
    if config.target != data.target || config.preprocess != data.preprocess {
        return Err(ModelError::InvalidConfig("prepared data was built for a different target or preprocessing".into()));
    }
    let clinical = arch.clinical_feature_width > 0;
    let mut net = PreOpNet::<f32>::new(arch, config.seed)?;
    let mut adam = AdamState::new(config.adam);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, PreOpNet<f32>)> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;
    let sample_len = N_LEADS * N_SAMPLES;

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut x = Vec::with_capacity(batch.len() * sample_len);
            let mut c = Vec::with_capacity(batch.len() * CLINICAL_FEATURES);
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let e = &data.train[i];
                x.extend_from_slice(&data.signals[e.signal]);
                c.extend_from_slice(&e.clinical);
                labels.push(if e.label { 1.0f32 } else { 0.0 });
            }
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(vec![batch.len(), N_LEADS, N_SAMPLES], x)?);
            let cv = clinical.then(|| Tensor::new(vec![batch.len(), CLINICAL_FEATURES], c)).transpose()?;
            let cv = cv.map(|t| tape.constant(t));
            let out = net.forward(&mut tape, xv, cv, BnMode::Train)?;
            let loss = tape.bce(out.prob, &labels)?;
            loss_sum += f64::from(tape.value(loss).data()[0]) * batch.len() as f64;
            let mut grads = tape.backward(loss)?;
            let g: Vec<Tensor<f32>> = out.params.iter().map(|&v| grads.take(v)).collect();
            if g.iter().any(|t| !t.all_finite()) {
                return Err(crate::autodiff::AutodiffError::NonFinite.into());
            }
            adam.step(&mut net.params_mut(), &g, config.learning_rate)?;
        }
        let val_scores = data.score(&net.fuse(), &data.val, clinical)?;
        let val_labels: Vec<bool> = data.val.iter().map(|e| e.label).collect();
        let val_auc = auc(&val_scores, &val_labels)?;
        let improved = best.as_ref().map_or(true, |(b, _, _)| val_auc > *b);
        let record = EpochRecord { epoch, train_loss: loss_sum / data.train.len() as f64, val_auc, improved };
        log::info!("epoch {epoch}: loss {:.5}, val AUC {val_auc:.4}{}", record.train_loss, if improved { " *" } else { "" });
        on_epoch(&record);
        history.push(record);
        if improved {
            best = Some((val_auc, epoch, net.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let (best_auc, best_epoch, best_net) = best.expect("at least one epoch ran");
    let fused = best_net.fuse();
    let calibration = data.score(&fused, &data.calibration, clinical)?;
    let threshold = if calibration.is_empty() {
        0.5
    } else {
        threshold_at_percentile(&calibration, config.threshold_percentile)?
    };
    let meta = TrainingMeta {
        seed: config.seed,
        target: config.target,
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        max_epochs: config.max_epochs,
        patience: config.patience,
        epochs_run: history.len(),
        best_epoch,
        best_val_auc: Some(best_auc),
        threshold,
        threshold_percentile: config.threshold_percentile,
        preprocess: config.preprocess,
        adam: config.adam,
    };
    Ok(TrainOutcome { weights: ModelWeights::new(best_net, meta), history, stopped_early })
}
