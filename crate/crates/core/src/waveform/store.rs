use std::collections::HashMap;
use std::path::PathBuf;

use super::ecg::{EcgMeta, EcgRecord};
use super::io::read_ecg_file;
use super::manifest::{EcgEntry, EcgId};
use super::WaveformError;

/// Somewhere manifest ECG entries can be resolved to validated waveforms.
pub trait WaveformSource: Sync {
    fn load(&self, entry: &EcgEntry) -> Result<EcgRecord, WaveformError>;
}

/// Resolves `entry.path` relative to a root directory (normally the
/// directory holding the manifest).
#[derive(Debug, Clone)]
pub struct DirectoryStore {
    root: PathBuf,
}

impl DirectoryStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl WaveformSource for DirectoryStore {
    fn load(&self, entry: &EcgEntry) -> Result<EcgRecord, WaveformError> {
        let meta = EcgMeta::new(entry.ecg_id.clone(), entry.patient_id.clone(), entry.acquired_at);
        read_ecg_file(self.root.join(&entry.path), meta)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    records: HashMap<EcgId, EcgRecord>,
}

impl MemoryStore {
    pub fn new(records: impl IntoIterator<Item = EcgRecord>) -> Self {
        Self { records: records.into_iter().map(|r| (r.ecg_id.clone(), r)).collect() }
    }

    pub fn get(&self, id: &EcgId) -> Option<&EcgRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl WaveformSource for MemoryStore {
    fn load(&self, entry: &EcgEntry) -> Result<EcgRecord, WaveformError> {
        self.records.get(&entry.ecg_id).cloned().ok_or_else(|| WaveformError::UnknownEcg(entry.ecg_id.to_string()))
    }
}
