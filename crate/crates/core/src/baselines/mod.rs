//! Conventional comparators: the RCRI score and gradient-boosted stumps
//! over clinical variables or structured ECG measurements.

mod features;
mod rcri;
mod stumps;

use thiserror::Error;

pub use features::{rcri_feature_matrix, StructuredEcgFeatures, RCRI_FEATURE_NAMES, STRUCTURED_FEATURE_NAMES};
pub use rcri::{rcri_score, RcriResult, RCRI_COMPONENTS, RCRI_HIGH_RISK};
pub use stumps::{Stump, StumpConfig, StumpEnsemble};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("both outcome classes are required")]
    SingleClass,
    #[error("no features or no examples")]
    EmptyFeatures,
    #[error("expected {expected} features per row, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("{0} feature rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("non-finite feature value in row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Container(#[from] crate::container::ContainerError),
    #[error("ensemble header: {0}")]
    Json(#[from] serde_json::Error),
}
