use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchitectureConfig;
use super::network::PreOpNet;
use super::predictor::Predictor;
use super::ModelError;
use crate::autodiff::{AdamConfig, Tensor};
use crate::container::{sha256_hex, Container, Record, Section};
use crate::waveform::{PreprocessConfig, Target};

const FORMAT: &str = "preopnet-weights";

/// Provenance stored next to the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub target: Target,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_auc: Option<f64>,
    /// Score at or above which a patient is called high-risk.
    pub threshold: f64,
    pub threshold_percentile: f64,
    pub preprocess: PreprocessConfig,
    pub adam: AdamConfig,
}

impl TrainingMeta {
    /// Metadata for freshly initialised weights.
    pub fn untrained(seed: u64) -> Self {
        Self {
            seed,
            target: Target::Mace,
            learning_rate: 0.0,
            batch_size: 0,
            max_epochs: 0,
            patience: 0,
            epochs_run: 0,
            best_epoch: 0,
            best_val_auc: None,
            threshold: 0.5,
            threshold_percentile: 85.0,
            preprocess: PreprocessConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: ArchitectureConfig,
    meta: TrainingMeta,
}

/// Trained network plus the metadata needed to serve it.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    pub meta: TrainingMeta,
    pub net: PreOpNet<f32>,
}

impl ModelWeights {
    pub fn new(net: PreOpNet<f32>, meta: TrainingMeta) -> Self {
        Self { meta, net }
    }

    pub fn config(&self) -> &ArchitectureConfig {
        self.net.config()
    }

    /// Deterministic encoding: identical weights give identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header { format: FORMAT.into(), config: self.config().clone(), meta: self.meta.clone() };
        let records = self
            .net
            .state()
            .into_iter()
            .map(|(name, t)| Record { name, shape: t.shape().to_vec(), data: t.into_data() })
            .collect();
        Container {
            section: Section::Model,
            header: serde_json::to_string(&header).expect("header serializes"),
            records,
        }
        .encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let c = Container::decode(bytes)?.expect_section(Section::Model)?;
        let header: Header = serde_json::from_str(&c.header)?;
        if header.format != FORMAT {
            return Err(ModelError::InvalidConfig(format!("unexpected weights format {:?}", header.format)));
        }
        let mut state = BTreeMap::new();
        for r in c.records {
            state.insert(r.name, Tensor::new(r.shape, r.data)?);
        }
        let net = PreOpNet::from_state(&header.config, &state)?;
        Ok(Self { meta: header.meta, net })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the encoded weights.
    pub fn checksum(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    pub fn predictor(&self) -> Predictor {
        Predictor::new(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::ContainerError;

    fn weights() -> ModelWeights {
        let net = PreOpNet::new(&ArchitectureConfig::canonical(), 11).unwrap();
        ModelWeights::new(net, TrainingMeta::untrained(11))
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let w = weights();
        let bytes = w.to_bytes();
        let back = ModelWeights::from_bytes(&bytes).unwrap();
        assert_eq!(back.meta, w.meta);
        for ((na, a), (nb, b)) in back.net.state().iter().zip(w.net.state().iter()) {
            assert_eq!(na, nb);
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b), "{na}");
        }
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupted_file_is_rejected() {
        let mut bytes = weights().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(
            ModelWeights::from_bytes(&bytes),
            Err(ModelError::Container(ContainerError::ChecksumMismatch))
        ));
    }
}
