//! Request bodies shared by the service and the CLI.

use base64::Engine;
use preopnet::waveform::{decode_binary, read_csv, validate_ecg, ClinicalProfile, EcgMeta, EcgRecord, PatientId, Sex, WaveformError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a request could not be served. `reason` codes are stable.
#[derive(Debug, Error)]
pub enum RequestError {
    #[error("{message}")]
    Invalid { reason: &'static str, message: String },
    #[error("{0}")]
    FeatureMismatch(String),
    #[error("{0}")]
    Internal(String),
}

impl RequestError {
    pub fn invalid(reason: &'static str, message: impl Into<String>) -> Self {
        Self::Invalid { reason, message: message.into() }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            Self::Invalid { reason, .. } => reason,
            Self::FeatureMismatch(_) => "FeatureMismatch",
            Self::Internal(_) => "Internal",
        }
    }
}

impl From<WaveformError> for RequestError {
    fn from(e: WaveformError) -> Self {
        match e {
            WaveformError::Ecg(e) => Self::invalid(e.reason(), e.to_string()),
            WaveformError::Io(e) => Self::Internal(e.to_string()),
            other => Self::invalid("MalformedEcg", other.to_string()),
        }
    }
}

impl From<preopnet::model::ModelError> for RequestError {
    fn from(e: preopnet::model::ModelError) -> Self {
        use preopnet::model::ModelError;
        match e {
            ModelError::FeatureMismatch(m) => Self::FeatureMismatch(m),
            ModelError::Waveform(w) => w.into(),
            other => Self::Internal(other.to_string()),
        }
    }
}

impl From<preopnet::explain::ExplainError> for RequestError {
    fn from(e: preopnet::explain::ExplainError) -> Self {
        use preopnet::explain::ExplainError;
        match e {
            ExplainError::FeatureMismatch(m) => Self::FeatureMismatch(m),
            ExplainError::InvalidArgument(m) => Self::invalid("InvalidArgument", m),
            ExplainError::Model(m) => m.into(),
            ExplainError::EmptyMap => Self::Internal(e.to_string()),
        }
    }
}

/// An ECG sent inline: either the binary file format base64-encoded or
/// the CSV text.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EcgPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecg_base64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecg_csv: Option<String>,
}

impl EcgPayload {
    pub fn binary(bytes: &[u8]) -> Self {
        Self { ecg_base64: Some(base64::engine::general_purpose::STANDARD.encode(bytes)), ecg_csv: None }
    }

    pub fn csv(text: impl Into<String>) -> Self {
        Self { ecg_base64: None, ecg_csv: Some(text.into()) }
    }

    pub fn decode(&self) -> Result<EcgRecord, RequestError> {
        let raw = match (&self.ecg_base64, &self.ecg_csv) {
            (Some(b64), None) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b64.trim())
                    .map_err(|e| RequestError::invalid("MalformedEcg", format!("base64: {e}")))?;
                decode_binary(&bytes)?
            }
            (None, Some(text)) => read_csv(text.as_bytes())?,
            _ => return Err(RequestError::invalid("MalformedRequest", "supply exactly one of ecg_base64 or ecg_csv")),
        };
        validate_ecg(raw, EcgMeta::anonymous()).map_err(|e| RequestError::invalid(e.reason(), e.to_string()))
    }
}

/// RCRI variables, age and sex as entered in a form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalInput {
    pub ischemic_heart_disease: bool,
    pub congestive_heart_failure: bool,
    pub cerebrovascular_disease: bool,
    pub insulin_use: bool,
    pub creatinine_gt_2mgdl: bool,
    pub elevated_risk_procedure: bool,
    pub age: f64,
    pub sex: Sex,
}

impl ClinicalInput {
    pub fn to_profile(&self) -> Result<ClinicalProfile, RequestError> {
        let p = ClinicalProfile {
            patient_id: PatientId("request".into()),
            ischemic_heart_disease: self.ischemic_heart_disease,
            congestive_heart_failure: self.congestive_heart_failure,
            cerebrovascular_disease: self.cerebrovascular_disease,
            insulin_use: self.insulin_use,
            creatinine_gt_2mgdl: self.creatinine_gt_2mgdl,
            elevated_risk_procedure: self.elevated_risk_procedure,
            age: self.age,
            sex: self.sex,
        };
        p.validate().map_err(|e| RequestError::invalid("InvalidClinical", e.to_string()))?;
        Ok(p)
    }
}

impl From<&ClinicalProfile> for ClinicalInput {
    fn from(p: &ClinicalProfile) -> Self {
        Self {
            ischemic_heart_disease: p.ischemic_heart_disease,
            congestive_heart_failure: p.congestive_heart_failure,
            cerebrovascular_disease: p.cerebrovascular_disease,
            insulin_use: p.insulin_use,
            creatinine_gt_2mgdl: p.creatinine_gt_2mgdl,
            elevated_risk_procedure: p.elevated_risk_procedure,
            age: p.age,
            sex: p.sex,
        }
    }
}
