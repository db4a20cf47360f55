//! PreOpNet: pre-operative risk estimation from a single 12-lead ECG.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`waveform`]: ECG and cohort data model, file formats, linkage,
//!   patient-level splitting, preprocessing and a synthetic cohort generator.
//! - [`autodiff`]: reverse-mode differentiable 1D kernels (dilated/grouped
//!   convolution, batch norm, activations, pooling, BCE) and ADAM.
//! - [`model`]: the PreOpNet graph, FLOPs accounting, training with early
//!   stopping, the dilation/stride grid and the weights container.
//! - [`baselines`]: RCRI scoring and gradient-boosted decision stumps.
//! - [`stats`]: AUC, bootstrap intervals, thresholds, confusion metrics,
//!   odds ratios, Youden's index and net reclassification.
//! - [`explain`]: perturbation importance maps over (lead, segment) cells.

pub mod autodiff;
pub mod baselines;
pub mod container;
pub mod explain;
pub mod model;
pub mod stats;
pub mod waveform;

pub use autodiff::{Scalar, Tensor};
pub use baselines::{rcri_score, RcriResult, StumpEnsemble};
pub use explain::{explain_ecg, perturbation_importance, render_heatmap_data, ExplainConfig, ImportanceMap, RiskModel};
pub use model::{ArchitectureConfig, ModelWeights, PreOpNet, Predictor, TrainConfig};
pub use stats::{MetricReport, ReclassificationTable, ScoredCohort};
pub use waveform::{
    ClinicalProfile, DatasetManifest, EcgProcedurePair, EcgRecord, OutcomeRecord, ProcedureRecord,
};
