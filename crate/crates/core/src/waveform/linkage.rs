use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, EcgEntry, EcgId, PatientId, ProcedureId, ProcedureRecord};

pub const LINK_WINDOW_DAYS: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    /// Every ECG pairs with its most proximal subsequent procedure.
    Training,
    /// Every procedure pairs with its most proximal preceding ECG.
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcgProcedurePair {
    pub ecg_id: EcgId,
    pub procedure_id: ProcedureId,
    pub patient_id: PatientId,
    /// Seconds from ECG acquisition to the procedure, in `[0, 30 days]`.
    pub gap_seconds: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Linkage {
    pub pairs: Vec<EcgProcedurePair>,
    /// ECGs (training mode) or procedures (evaluation mode) left without a partner.
    pub unmatched: usize,
}

fn gap(ecg: &EcgEntry, proc_: &ProcedureRecord) -> i64 {
    (proc_.performed_at - ecg.acquired_at).num_seconds()
}

/// Pairs ECGs with procedures of the same patient inside the 30-day window.
///
/// Ties on the gap are broken by the smaller procedure id (training mode)
/// or the smaller ECG id (evaluation mode). Output is ordered by ECG id in
/// training mode and by procedure id in evaluation mode.
pub fn link_ecgs_to_procedures(manifest: &DatasetManifest, mode: LinkMode) -> Linkage {
    let window = LINK_WINDOW_DAYS * 86_400;
    let in_window = |g: i64| (0..=window).contains(&g);

    let mut by_patient: BTreeMap<&PatientId, (Vec<&EcgEntry>, Vec<&ProcedureRecord>)> = BTreeMap::new();
    for e in &manifest.ecgs {
        by_patient.entry(&e.patient_id).or_default().0.push(e);
    }
    for p in &manifest.procedures {
        by_patient.entry(&p.patient_id).or_default().1.push(p);
    }

    let mut linkage = Linkage::default();
    for (_, (ecgs, procedures)) in by_patient {
        match mode {
            LinkMode::Training => {
                for e in ecgs {
                    let best = procedures
                        .iter()
                        .map(|p| (gap(e, p), *p))
                        .filter(|(g, _)| in_window(*g))
                        .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.procedure_id.cmp(&b.1.procedure_id)));
                    match best {
                        Some((g, p)) => linkage.pairs.push(EcgProcedurePair {
                            ecg_id: e.ecg_id.clone(),
                            procedure_id: p.procedure_id.clone(),
                            patient_id: e.patient_id.clone(),
                            gap_seconds: g,
                        }),
                        None => linkage.unmatched += 1,
                    }
                }
            }
            LinkMode::Evaluation => {
                for p in procedures {
                    let best = ecgs
                        .iter()
                        .map(|e| (gap(e, p), *e))
                        .filter(|(g, _)| in_window(*g))
                        .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.ecg_id.cmp(&b.1.ecg_id)));
                    match best {
                        Some((g, e)) => linkage.pairs.push(EcgProcedurePair {
                            ecg_id: e.ecg_id.clone(),
                            procedure_id: p.procedure_id.clone(),
                            patient_id: p.patient_id.clone(),
                            gap_seconds: g,
                        }),
                        None => linkage.unmatched += 1,
                    }
                }
            }
        }
    }
    match mode {
        LinkMode::Training => linkage.pairs.sort_by(|a, b| a.ecg_id.cmp(&b.ecg_id)),
        LinkMode::Evaluation => linkage.pairs.sort_by(|a, b| a.procedure_id.cmp(&b.procedure_id)),
    }
    linkage
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::manifest::Setting;
    use chrono::{DateTime, Duration, Utc};
    use proptest::prelude::*;

    fn t(seconds: i64) -> DateTime<Utc> {
        DateTime::<Utc>::UNIX_EPOCH + Duration::seconds(seconds)
    }

    fn ecg(id: &str, patient: &str, at: i64) -> EcgEntry {
        EcgEntry { ecg_id: id.into(), patient_id: patient.into(), acquired_at: t(at), path: String::new() }
    }

    fn procedure(id: &str, patient: &str, at: i64) -> ProcedureRecord {
        ProcedureRecord {
            procedure_id: id.into(),
            patient_id: patient.into(),
            performed_at: t(at),
            setting: Setting::OperatingRoom,
            cardiac: false,
            elective: true,
            elevated_risk: false,
        }
    }

    const DAY: i64 = 86_400;

    #[test]
    fn training_pairs_to_most_proximal_subsequent() {
        let m = DatasetManifest {
            ecgs: vec![ecg("e", "p", 0)],
            procedures: vec![procedure("late", "p", 20 * DAY), procedure("soon", "p", 5 * DAY)],
            ..Default::default()
        };
        let l = link_ecgs_to_procedures(&m, LinkMode::Training);
        assert_eq!(l.pairs.len(), 1);
        assert_eq!(l.pairs[0].procedure_id.as_str(), "soon");
        assert_eq!(l.pairs[0].gap_seconds, 5 * DAY);
    }

    #[test]
    fn evaluation_keeps_single_most_proximal_ecg() {
        let m = DatasetManifest {
            ecgs: vec![ecg("early", "p", -25 * DAY), ecg("recent", "p", -3 * DAY)],
            procedures: vec![procedure("op", "p", 0)],
            ..Default::default()
        };
        let l = link_ecgs_to_procedures(&m, LinkMode::Evaluation);
        assert_eq!(l.pairs.len(), 1);
        assert_eq!(l.pairs[0].ecg_id.as_str(), "recent");
        // training mode keeps both ECGs
        assert_eq!(link_ecgs_to_procedures(&m, LinkMode::Training).pairs.len(), 2);
    }

    #[test]
    fn outside_window_is_unmatched() {
        let m = DatasetManifest {
            ecgs: vec![ecg("e", "p", -31 * DAY)],
            procedures: vec![procedure("op", "p", 0)],
            ..Default::default()
        };
        for mode in [LinkMode::Training, LinkMode::Evaluation] {
            let l = link_ecgs_to_procedures(&m, mode);
            assert!(l.pairs.is_empty());
            assert_eq!(l.unmatched, 1);
        }
    }

    #[test]
    fn equidistant_ecgs_prefer_smaller_id() {
        let m = DatasetManifest {
            ecgs: vec![ecg("b", "p", -DAY), ecg("a", "p", -DAY)],
            procedures: vec![procedure("op", "p", 0)],
            ..Default::default()
        };
        let l = link_ecgs_to_procedures(&m, LinkMode::Evaluation);
        assert_eq!(l.pairs[0].ecg_id.as_str(), "a");
    }

    #[test]
    fn other_patients_never_link() {
        let m = DatasetManifest {
            ecgs: vec![ecg("e", "p1", 0)],
            procedures: vec![procedure("op", "p2", DAY)],
            ..Default::default()
        };
        assert!(link_ecgs_to_procedures(&m, LinkMode::Training).pairs.is_empty());
    }

    /// Exhaustive O(n·m) scan applying the window and proximity rules directly.
    fn brute_force(m: &DatasetManifest, mode: LinkMode) -> Vec<(String, String, i64)> {
        let mut out = Vec::new();
        match mode {
            LinkMode::Training => {
                for e in &m.ecgs {
                    let mut best: Option<(i64, String)> = None;
                    for p in &m.procedures {
                        if p.patient_id != e.patient_id {
                            continue;
                        }
                        let g = p.performed_at.timestamp() - e.acquired_at.timestamp();
                        if g < 0 || g > 30 * DAY {
                            continue;
                        }
                        let cand = (g, p.procedure_id.0.clone());
                        if best.as_ref().map_or(true, |b| cand < *b) {
                            best = Some(cand);
                        }
                    }
                    if let Some((g, p)) = best {
                        out.push((e.ecg_id.0.clone(), p, g));
                    }
                }
            }
            LinkMode::Evaluation => {
                for p in &m.procedures {
                    let mut best: Option<(i64, String)> = None;
                    for e in &m.ecgs {
                        if p.patient_id != e.patient_id {
                            continue;
                        }
                        let g = p.performed_at.timestamp() - e.acquired_at.timestamp();
                        if g < 0 || g > 30 * DAY {
                            continue;
                        }
                        let cand = (g, e.ecg_id.0.clone());
                        if best.as_ref().map_or(true, |b| cand < *b) {
                            best = Some(cand);
                        }
                    }
                    if let Some((g, e)) = best {
                        out.push((e, p.procedure_id.0.clone(), g));
                    }
                }
            }
        }
        out.sort();
        out
    }

    fn manifest_strategy() -> impl Strategy<Value = DatasetManifest> {
        let ecgs = proptest::collection::vec((0u8..6, -40i64..40, 0i64..3), 0..100);
        let procs = proptest::collection::vec((0u8..6, -40i64..40), 0..100);
        (ecgs, procs).prop_map(|(ecgs, procs)| DatasetManifest {
            ecgs: ecgs
                .into_iter()
                .enumerate()
                .map(|(i, (p, d, h))| ecg(&format!("e{i:03}"), &format!("p{p}"), d * DAY + h * 3600 * 12))
                .collect(),
            procedures: procs
                .into_iter()
                .enumerate()
                .map(|(i, (p, d))| procedure(&format!("q{i:03}"), &format!("p{p}"), d * DAY))
                .collect(),
            ..Default::default()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_brute_force_scan(m in manifest_strategy()) {
            for mode in [LinkMode::Training, LinkMode::Evaluation] {
                let l = link_ecgs_to_procedures(&m, mode);
                let mut got: Vec<(String, String, i64)> = l
                    .pairs
                    .iter()
                    .map(|p| (p.ecg_id.0.clone(), p.procedure_id.0.clone(), p.gap_seconds))
                    .collect();
                got.sort();
                let expected = brute_force(&m, mode);
                let total = match mode { LinkMode::Training => m.ecgs.len(), LinkMode::Evaluation => m.procedures.len() };
                prop_assert_eq!(l.unmatched, total - expected.len());
                prop_assert_eq!(got, expected);
            }
        }
    }
}
