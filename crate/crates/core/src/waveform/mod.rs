//! ECG and cohort data model.
//!
//! Waveforms are stored as 12 × 5000 lead-major `f32` matrices in
//! millivolts. Everything here is immutable after construction; the
//! operations are pure given their inputs and seed.

mod ecg;
mod io;
mod linkage;
mod manifest;
mod preprocess;
mod split;
mod store;
pub mod synth;

use thiserror::Error;

pub use ecg::{validate_ecg, EcgError, EcgMeta, EcgRecord, RawEcg, LEAD_NAMES, N_LEADS, N_SAMPLES, SAMPLE_RATE_HZ};
pub use io::{
    decode_binary, encode_binary, read_csv, read_ecg_file, write_csv, write_ecg_file, EcgFileFormat,
    BINARY_MAGIC, BINARY_VERSION,
};
pub use linkage::{link_ecgs_to_procedures, EcgProcedurePair, LinkMode, Linkage, LINK_WINDOW_DAYS};
pub use manifest::{
    ClinicalProfile, DatasetManifest, EcgEntry, EcgId, OutcomeRecord, PatientId, ProcedureId,
    ProcedureRecord, Setting, Sex, Split, Target,
};
pub use preprocess::{preprocess, moving_median, Normalization, PreprocessConfig};
pub use split::split_patients;
pub use store::{DirectoryStore, MemoryStore, WaveformSource};
pub use synth::{generate_synthetic_cohort, PlantedTruth, SynthConfig, SyntheticCohort};

/// Errors raised while reading, validating or assembling cohort data.
#[derive(Debug, Error)]
pub enum WaveformError {
    #[error(transparent)]
    Ecg(#[from] EcgError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed ECG file: {0}")]
    Format(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("unknown ECG id {0}")]
    UnknownEcg(String),
}
