//! The PreOpNet network, its training loop and serialisation.

mod arch;
pub mod flops;
mod grid;
mod network;
mod predictor;
mod train;
mod weights;

use thiserror::Error;

pub use arch::{
    same_padding, ArchitectureConfig, BlockSpec, ConvLayerSpec, LayerKind, LayerPlan, StageConfig, StemConfig,
    CLINICAL_FEATURES,
};
pub use flops::{count_flops, flops_breakdown, FlopsBreakdown, FlopsEntry};
pub use grid::{cell_seed, grid_search, select_best, GridCell, GridReport, GridSpec};
pub use network::{Block, ConvBn, ForwardVars, InferenceNet, PreOpNet};
pub use predictor::{clinical_features, Predictor};
pub use train::{score_split, train, EpochRecord, PreparedData, TrainConfig, TrainOutcome};
pub use weights::{ModelWeights, TrainingMeta};

use crate::autodiff::AutodiffError;
use crate::container::ContainerError;
use crate::stats::StatsError;
use crate::waveform::{Split, WaveformError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("weights are missing tensor {0}")]
    MissingTensor(String),
    #[error("the {0:?} split needs both outcome classes")]
    SingleClassSplit(Split),
    #[error("the {0:?} split has no linked ECG-procedure pairs")]
    EmptySplit(Split),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("weights header: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<crate::waveform::EcgError> for ModelError {
    fn from(e: crate::waveform::EcgError) -> Self {
        Self::Waveform(e.into())
    }
}
