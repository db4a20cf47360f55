use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::WaveformError;

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(
    /// Opaque ECG identifier. Ordering is lexicographic and is used for tie-breaking.
    EcgId
);
id_newtype!(PatientId);
id_newtype!(ProcedureId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    OperatingRoom,
    CathOrEndoscopy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureRecord {
    pub procedure_id: ProcedureId,
    pub patient_id: PatientId,
    pub performed_at: DateTime<Utc>,
    pub setting: Setting,
    pub cardiac: bool,
    pub elective: bool,
    pub elevated_risk: bool,
}

fn default_window() -> u32 {
    30
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Death,
    Mace,
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Target::Death => "death",
            Target::Mace => "mace",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "death" => Ok(Target::Death),
            "mace" => Ok(Target::Mace),
            other => Err(format!("unknown target {other:?}, expected death or mace")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub procedure_id: ProcedureId,
    pub death: bool,
    pub myocardial_infarction: bool,
    pub cardiac_arrest: bool,
    pub heart_block: bool,
    pub pulmonary_edema: bool,
    #[serde(default = "default_window")]
    pub window_days: u32,
}

impl OutcomeRecord {
    /// Death or any non-fatal major adverse cardiovascular event.
    pub fn mace(&self) -> bool {
        self.death || self.myocardial_infarction || self.cardiac_arrest || self.heart_block || self.pulmonary_edema
    }

    pub fn label(&self, target: Target) -> bool {
        match target {
            Target::Death => self.death,
            Target::Mace => self.mace(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

/// The six RCRI components plus age and sex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalProfile {
    pub patient_id: PatientId,
    pub ischemic_heart_disease: bool,
    pub congestive_heart_failure: bool,
    pub cerebrovascular_disease: bool,
    pub insulin_use: bool,
    pub creatinine_gt_2mgdl: bool,
    pub elevated_risk_procedure: bool,
    pub age: f64,
    pub sex: Sex,
}

impl ClinicalProfile {
    pub fn validate(&self) -> Result<(), WaveformError> {
        if !(18.0..=120.0).contains(&self.age) {
            return Err(WaveformError::Manifest(format!(
                "patient {}: age {} outside [18, 120]",
                self.patient_id, self.age
            )));
        }
        Ok(())
    }

    /// RCRI components in canonical order.
    pub fn rcri_components(&self) -> [bool; 6] {
        [
            self.ischemic_heart_disease,
            self.congestive_heart_failure,
            self.cerebrovascular_disease,
            self.insulin_use,
            self.creatinine_gt_2mgdl,
            self.elevated_risk_procedure,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Reference to a waveform file; `path` is relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgEntry {
    pub ecg_id: EcgId,
    pub patient_id: PatientId,
    pub acquired_at: DateTime<Utc>,
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub ecgs: Vec<EcgEntry>,
    pub procedures: Vec<ProcedureRecord>,
    pub outcomes: Vec<OutcomeRecord>,
    pub profiles: Vec<ClinicalProfile>,
    pub splits: BTreeMap<PatientId, Split>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, WaveformError> {
        let text = std::fs::read_to_string(path)?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WaveformError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Structural checks: unique ids, outcome references, profile sanity and
    /// a split for every patient. Waveform contents are checked separately
    /// by [`DatasetManifest::validate_waveforms`].
    pub fn validate(&self) -> Result<(), WaveformError> {
        let mut ecg_ids = BTreeSet::new();
        for e in &self.ecgs {
            if !ecg_ids.insert(&e.ecg_id) {
                return Err(WaveformError::Manifest(format!("duplicate ecg_id {}", e.ecg_id)));
            }
        }
        let mut procedure_ids = BTreeSet::new();
        for p in &self.procedures {
            if !procedure_ids.insert(&p.procedure_id) {
                return Err(WaveformError::Manifest(format!("duplicate procedure_id {}", p.procedure_id)));
            }
        }
        let mut seen_outcomes = BTreeSet::new();
        for o in &self.outcomes {
            if !procedure_ids.contains(&o.procedure_id) {
                return Err(WaveformError::Manifest(format!(
                    "outcome references unknown procedure {}",
                    o.procedure_id
                )));
            }
            if !seen_outcomes.insert(&o.procedure_id) {
                return Err(WaveformError::Manifest(format!("duplicate outcome for {}", o.procedure_id)));
            }
        }
        let mut seen_profiles = BTreeSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !seen_profiles.insert(&p.patient_id) {
                return Err(WaveformError::Manifest(format!("duplicate profile for {}", p.patient_id)));
            }
        }
        if !self.splits.is_empty() {
            let patients = self.ecgs.iter().map(|e| &e.patient_id).chain(self.procedures.iter().map(|p| &p.patient_id));
            for pid in patients {
                if !self.splits.contains_key(pid) {
                    return Err(WaveformError::Manifest(format!("patient {pid} has no split assignment")));
                }
            }
        }
        Ok(())
    }

    /// Loads and validates every referenced waveform.
    pub fn validate_waveforms(&self, store: &dyn super::WaveformSource) -> Result<(), WaveformError> {
        for entry in &self.ecgs {
            store.load(entry)?;
        }
        Ok(())
    }

    pub fn split_of(&self, patient: &PatientId) -> Option<Split> {
        self.splits.get(patient).copied()
    }

    pub fn ecg(&self, id: &EcgId) -> Option<&EcgEntry> {
        self.ecgs.iter().find(|e| &e.ecg_id == id)
    }

    pub fn ecg_index(&self) -> HashMap<&EcgId, &EcgEntry> {
        self.ecgs.iter().map(|e| (&e.ecg_id, e)).collect()
    }

    pub fn procedure_index(&self) -> HashMap<&ProcedureId, &ProcedureRecord> {
        self.procedures.iter().map(|p| (&p.procedure_id, p)).collect()
    }

    pub fn outcome_index(&self) -> HashMap<&ProcedureId, &OutcomeRecord> {
        self.outcomes.iter().map(|o| (&o.procedure_id, o)).collect()
    }

    pub fn profile_index(&self) -> HashMap<&PatientId, &ClinicalProfile> {
        self.profiles.iter().map(|p| (&p.patient_id, p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(days: i64) -> DateTime<Utc> {
        DateTime::<Utc>::UNIX_EPOCH + chrono::Duration::days(days)
    }

    fn tiny() -> DatasetManifest {
        DatasetManifest {
            ecgs: vec![EcgEntry { ecg_id: "e1".into(), patient_id: "p1".into(), acquired_at: ts(0), path: "e1.pecg".into() }],
            procedures: vec![ProcedureRecord {
                procedure_id: "q1".into(),
                patient_id: "p1".into(),
                performed_at: ts(3),
                setting: Setting::OperatingRoom,
                cardiac: false,
                elective: true,
                elevated_risk: false,
            }],
            outcomes: vec![OutcomeRecord {
                procedure_id: "q1".into(),
                death: false,
                myocardial_infarction: true,
                cardiac_arrest: false,
                heart_block: false,
                pulmonary_edema: false,
                window_days: 30,
            }],
            profiles: vec![],
            splits: [("p1".into(), Split::Train)].into_iter().collect(),
        }
    }

    #[test]
    fn mace_is_death_or_any_component() {
        let o = &tiny().outcomes[0];
        assert!(o.mace());
        assert!(!o.label(Target::Death));
        assert!(o.label(Target::Mace));
    }

    #[test]
    fn json_round_trip_uses_iso_timestamps() {
        let m = tiny();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("1970-01-04T00:00:00Z"));
        assert!(text.contains("\"operating_room\""));
        let back: DatasetManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn dangling_outcome_is_rejected() {
        let mut m = tiny();
        m.outcomes[0].procedure_id = "nope".into();
        assert!(matches!(m.validate(), Err(WaveformError::Manifest(_))));
    }

    #[test]
    fn missing_split_is_rejected() {
        let mut m = tiny();
        m.splits.clear();
        m.splits.insert("other".into(), Split::Val);
        assert!(m.validate().is_err());
    }

    #[test]
    fn window_days_defaults_to_thirty() {
        let o: OutcomeRecord = serde_json::from_str(
            r#"{"procedure_id":"q","death":true,"myocardial_infarction":false,"cardiac_arrest":false,"heart_block":false,"pulmonary_edema":false}"#,
        )
        .unwrap();
        assert_eq!(o.window_days, 30);
    }
}
