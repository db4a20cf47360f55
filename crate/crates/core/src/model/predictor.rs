use super::arch::CLINICAL_FEATURES;
use super::network::InferenceNet;
use super::weights::ModelWeights;
use super::ModelError;
use crate::waveform::{preprocess, ClinicalProfile, EcgRecord, PreprocessConfig, Sex, Target};

/// `[age/100, sex (male = 1), six RCRI components as 0/1]`.
pub fn clinical_features(profile: &ClinicalProfile) -> [f32; CLINICAL_FEATURES] {
    let mut f = [0.0f32; CLINICAL_FEATURES];
    f[0] = (profile.age / 100.0) as f32;
    f[1] = if profile.sex == Sex::Male { 1.0 } else { 0.0 };
    for (slot, &c) in f[2..].iter_mut().zip(profile.rcri_components().iter()) {
        *slot = if c { 1.0 } else { 0.0 };
    }
    f
}

/// Ready-to-serve model: preprocessing, fused network and decision threshold.
#[derive(Debug, Clone)]
pub struct Predictor {
    net: InferenceNet,
    preprocess: PreprocessConfig,
    threshold: f64,
    target: Target,
}

impl Predictor {
    pub fn new(weights: &ModelWeights) -> Self {
        Self {
            net: weights.net.fuse(),
            preprocess: weights.meta.preprocess,
            threshold: weights.meta.threshold,
            target: weights.meta.target,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn preprocess_config(&self) -> &PreprocessConfig {
        &self.preprocess
    }

    pub fn uses_clinical(&self) -> bool {
        self.net.config().clinical_feature_width > 0
    }

    pub fn is_high_risk(&self, probability: f64) -> bool {
        probability >= self.threshold
    }

    /// Clinical vector for the network, or `None` for a waveform-only model.
    pub fn clinical_input(&self, clinical: Option<&ClinicalProfile>) -> Result<Option<[f32; CLINICAL_FEATURES]>, ModelError> {
        if !self.uses_clinical() {
            return Ok(None);
        }
        clinical.map(clinical_features).map(Some).ok_or_else(|| {
            ModelError::FeatureMismatch(format!("model expects {CLINICAL_FEATURES} clinical features, none supplied"))
        })
    }

    /// Preprocesses a raw ECG and returns the event probability.
    pub fn predict(&self, ecg: &EcgRecord, clinical: Option<&ClinicalProfile>) -> Result<f64, ModelError> {
        let prepared = preprocess(ecg, &self.preprocess)?;
        self.predict_preprocessed(&prepared, clinical)
    }

    /// Scores an ECG that already went through [`Predictor::preprocess_config`].
    pub fn predict_preprocessed(&self, ecg: &EcgRecord, clinical: Option<&ClinicalProfile>) -> Result<f64, ModelError> {
        let c = self.clinical_input(clinical)?;
        self.net.probability(ecg.samples(), c.as_ref().map(|v| v.as_slice()))
    }

    /// Lead-major samples in normalised space plus an optional clinical vector.
    pub fn predict_samples(&self, samples: &[f32], clinical: Option<&[f32]>) -> Result<f64, ModelError> {
        self.net.probability(samples, clinical)
    }

    /// Scores each example independently, so results equal repeated
    /// [`Predictor::predict`] calls bit for bit.
    pub fn predict_batch(
        &self,
        ecgs: &[EcgRecord],
        clinical: &[Option<&ClinicalProfile>],
    ) -> Result<Vec<f64>, ModelError> {
        if !clinical.is_empty() && clinical.len() != ecgs.len() {
            return Err(ModelError::FeatureMismatch(format!(
                "{} ECGs but {} clinical profiles",
                ecgs.len(),
                clinical.len()
            )));
        }
        ecgs.iter()
            .enumerate()
            .map(|(i, e)| self.predict(e, clinical.get(i).copied().flatten()))
            .collect()
    }

    pub fn net(&self) -> &InferenceNet {
        &self.net
    }
}
