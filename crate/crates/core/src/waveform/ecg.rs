use chrono::{DateTime, Utc};
use thiserror::Error;

use super::manifest::{EcgId, PatientId};

pub const N_LEADS: usize = 12;
pub const N_SAMPLES: usize = 5000;
pub const SAMPLE_RATE_HZ: f32 = 500.0;

/// Canonical lead order; every [`EcgRecord`] stores its leads in this order.
pub const LEAD_NAMES: [&str; N_LEADS] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

/// Reasons an ECG is rejected. The variant names double as the
/// machine-readable reason codes exposed by the service.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EcgError {
    #[error("missing lead: {0}")]
    MissingLead(String),
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("non-finite amplitude in lead {lead} at sample {sample}")]
    NonFinite { lead: String, sample: usize },
    #[error("bad sample rate {0} Hz, expected 500 Hz")]
    BadRate(f32),
}

impl EcgError {
    pub fn reason(&self) -> &'static str {
        match self {
            EcgError::MissingLead(_) => "MissingLead",
            EcgError::BadShape(_) => "BadShape",
            EcgError::NonFinite { .. } => "NonFinite",
            EcgError::BadRate(_) => "BadRate",
        }
    }
}

/// Identity and timing of an ECG, supplied alongside the raw samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgMeta {
    pub ecg_id: EcgId,
    pub patient_id: PatientId,
    pub acquired_at: DateTime<Utc>,
}

impl EcgMeta {
    pub fn new(ecg_id: impl Into<EcgId>, patient_id: impl Into<PatientId>, acquired_at: DateTime<Utc>) -> Self {
        Self { ecg_id: ecg_id.into(), patient_id: patient_id.into(), acquired_at }
    }

    /// Placeholder identity for payloads that arrive without metadata.
    pub fn anonymous() -> Self {
        Self::new("anonymous", "anonymous", DateTime::<Utc>::UNIX_EPOCH)
    }
}

/// Decoded but unvalidated samples, as read from a file or request.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEcg {
    /// Lead names in the order of `leads`. `None` means canonical order.
    pub lead_names: Option<Vec<String>>,
    pub leads: Vec<Vec<f32>>,
    pub sample_rate: f32,
    pub declared_leads: usize,
    pub declared_samples: usize,
}

impl RawEcg {
    /// Builds a raw ECG in canonical lead order whose declared shape matches its data.
    pub fn from_leads(leads: Vec<Vec<f32>>, sample_rate: f32) -> Self {
        let declared_leads = leads.len();
        let declared_samples = leads.first().map_or(0, Vec::len);
        Self { lead_names: None, leads, sample_rate, declared_leads, declared_samples }
    }
}

/// A validated 12-lead, 10-second, 500 Hz ECG in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub ecg_id: EcgId,
    pub patient_id: PatientId,
    pub acquired_at: DateTime<Utc>,
    samples: Vec<f32>,
}

impl EcgRecord {
    pub fn sample_rate(&self) -> f32 {
        SAMPLE_RATE_HZ
    }

    pub fn lead_names(&self) -> &'static [&'static str; N_LEADS] {
        &LEAD_NAMES
    }

    pub fn lead(&self, index: usize) -> &[f32] {
        &self.samples[index * N_SAMPLES..(index + 1) * N_SAMPLES]
    }

    /// Lead-major samples, `N_LEADS * N_SAMPLES` values.
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn leads(&self) -> impl Iterator<Item = &[f32]> {
        self.samples.chunks_exact(N_SAMPLES)
    }

    pub fn meta(&self) -> EcgMeta {
        EcgMeta {
            ecg_id: self.ecg_id.clone(),
            patient_id: self.patient_id.clone(),
            acquired_at: self.acquired_at,
        }
    }

    /// Returns a copy with the samples replaced, re-checking the invariants.
    pub fn with_samples(&self, samples: Vec<f32>) -> Result<Self, EcgError> {
        check_matrix(&samples)?;
        Ok(Self { samples, ..self.clone() })
    }

    pub(crate) fn from_parts(meta: EcgMeta, samples: Vec<f32>) -> Result<Self, EcgError> {
        check_matrix(&samples)?;
        Ok(Self {
            ecg_id: meta.ecg_id,
            patient_id: meta.patient_id,
            acquired_at: meta.acquired_at,
            samples,
        })
    }

    pub fn to_raw(&self) -> RawEcg {
        RawEcg::from_leads(self.leads().map(<[f32]>::to_vec).collect(), SAMPLE_RATE_HZ)
    }
}

fn check_matrix(samples: &[f32]) -> Result<(), EcgError> {
    if samples.len() != N_LEADS * N_SAMPLES {
        return Err(EcgError::BadShape(format!(
            "expected {} values, found {}",
            N_LEADS * N_SAMPLES,
            samples.len()
        )));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(EcgError::NonFinite { lead: LEAD_NAMES[i / N_SAMPLES].to_string(), sample: i % N_SAMPLES });
    }
    Ok(())
}

/// Validates raw samples against the 12 × 5000 @ 500 Hz contract.
///
/// Leads named in `raw.lead_names` are reordered into canonical order.
/// A rejection never truncates or pads: any deviation is an error.
pub fn validate_ecg(raw: RawEcg, meta: EcgMeta) -> Result<EcgRecord, EcgError> {
    let RawEcg { lead_names, leads, sample_rate, declared_leads, declared_samples } = raw;

    let leads = match lead_names {
        None => leads,
        Some(names) => reorder_by_name(names, leads)?,
    };
    if leads.len() < N_LEADS {
        let missing = LEAD_NAMES[leads.len()..].join(", ");
        return Err(EcgError::MissingLead(format!(
            "expected {N_LEADS} leads, found {} (missing {missing})",
            leads.len()
        )));
    }
    if leads.len() > N_LEADS {
        return Err(EcgError::BadShape(format!("expected {N_LEADS} leads, found {}", leads.len())));
    }
    if let Some((i, lead)) = leads.iter().enumerate().find(|(_, l)| l.len() != N_SAMPLES) {
        return Err(EcgError::BadShape(format!(
            "lead {} has {} samples, expected {N_SAMPLES}",
            LEAD_NAMES[i],
            lead.len()
        )));
    }
    if declared_leads != N_LEADS || declared_samples != N_SAMPLES {
        return Err(EcgError::BadShape(format!(
            "declared shape {declared_leads}x{declared_samples} does not match data {N_LEADS}x{N_SAMPLES}"
        )));
    }
    if let Some(i) = leads.iter().position(|l| l.iter().all(|v| v.is_nan())) {
        return Err(EcgError::MissingLead(LEAD_NAMES[i].to_string()));
    }
    if sample_rate != SAMPLE_RATE_HZ {
        return Err(EcgError::BadRate(sample_rate));
    }
    let samples: Vec<f32> = leads.concat();
    EcgRecord::from_parts(meta, samples)
}

fn reorder_by_name(names: Vec<String>, leads: Vec<Vec<f32>>) -> Result<Vec<Vec<f32>>, EcgError> {
    if names.len() != leads.len() {
        return Err(EcgError::BadShape(format!("{} lead names for {} leads", names.len(), leads.len())));
    }
    if let Some(unknown) = names.iter().find(|n| !LEAD_NAMES.contains(&n.as_str())) {
        return Err(EcgError::BadShape(format!("unknown lead name {unknown:?}")));
    }
    let mut slots: Vec<Option<Vec<f32>>> = vec![None; N_LEADS];
    for (name, lead) in names.iter().zip(leads) {
        let idx = LEAD_NAMES.iter().position(|n| n == name).expect("checked above");
        if slots[idx].is_some() {
            return Err(EcgError::BadShape(format!("duplicate lead {name}")));
        }
        slots[idx] = Some(lead);
    }
    if let Some(i) = slots.iter().position(Option::is_none) {
        return Err(EcgError::MissingLead(LEAD_NAMES[i].to_string()));
    }
    Ok(slots.into_iter().map(|s| s.expect("all present")).collect())
}
