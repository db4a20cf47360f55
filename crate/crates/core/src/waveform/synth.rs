//! Synthetic planted-signal cohorts.
//!
//! Each patient carries a latent standard-normal risk `z`. It drives three
//! things independently: planted waveform abnormalities (widened QRS
//! complexes and ectopic beats, scaled by `waveform_signal`), the RCRI
//! covariates (scaled by `clinical_signal`) and Bernoulli outcomes. Random
//! streams are split per patient and per purpose, so changing a signal
//! strength never changes the outcomes or covariate draws.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ecg::{EcgMeta, EcgRecord, N_LEADS, N_SAMPLES, SAMPLE_RATE_HZ};
use super::io::{write_ecg_file, EcgFileFormat};
use super::manifest::{
    ClinicalProfile, DatasetManifest, EcgEntry, EcgId, OutcomeRecord, PatientId, ProcedureRecord, Setting, Sex,
};
use super::split::split_patients;
use super::store::MemoryStore;
use super::WaveformError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub ecgs_per_patient: usize,
    pub procedures_per_patient: usize,
    /// Per-procedure probability of death.
    pub event_rate: f64,
    /// Per-procedure probability of a non-fatal MACE component.
    pub nonfatal_mace_rate: f64,
    /// Log-odds of an outcome per standard deviation of latent risk.
    pub outcome_slope: f64,
    pub waveform_signal: f64,
    pub clinical_signal: f64,
    pub noise_mv: f64,
    pub split_ratios: [u32; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 2500,
            ecgs_per_patient: 1,
            procedures_per_patient: 1,
            event_rate: 0.018,
            nonfatal_mace_rate: 0.011,
            outcome_slope: 3.0,
            waveform_signal: 1.0,
            clinical_signal: 0.5,
            noise_mv: 0.03,
            split_ratios: [8, 1, 1],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), WaveformError> {
        let rate_ok = |r: f64| r > 0.0 && r < 1.0;
        if !rate_ok(self.event_rate) || !rate_ok(self.nonfatal_mace_rate) {
            return Err(WaveformError::BadConfig(format!(
                "event rates must lie in (0, 1): death {}, non-fatal {}",
                self.event_rate, self.nonfatal_mace_rate
            )));
        }
        if self.n_patients == 0 || self.ecgs_per_patient == 0 || self.procedures_per_patient == 0 {
            return Err(WaveformError::BadConfig("patient, ECG and procedure counts must be positive".into()));
        }
        let finite = [self.outcome_slope, self.waveform_signal, self.clinical_signal, self.noise_mv];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(WaveformError::BadConfig("signal strengths and noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Ground truth of what was planted in one ECG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub latent_risk: f64,
    pub heart_rate_bpm: f64,
    pub qrs_width_factor: f64,
    pub ectopic_count: usize,
    /// Sample ranges `[start, end)` covered by ectopic complexes.
    pub ectopic_spans: Vec<(usize, usize)>,
    /// Sample ranges of QRS complexes, recorded only when widened.
    pub widened_qrs_spans: Vec<(usize, usize)>,
}

impl PlantedTruth {
    /// Planted-feature count used as the oracle score: ectopic beats plus
    /// the fractional QRS widening.
    pub fn severity(&self) -> f64 {
        self.ectopic_count as f64 + (self.qrs_width_factor - 1.0)
    }

    pub fn planted_spans(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.ectopic_spans.iter().chain(&self.widened_qrs_spans)
    }

    pub fn is_abnormal(&self) -> bool {
        self.ectopic_count > 0 || self.qrs_width_factor > 1.0
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub manifest: DatasetManifest,
    pub waveforms: MemoryStore,
    pub truth: BTreeMap<EcgId, PlantedTruth>,
}

impl SyntheticCohort {
    /// Writes `manifest.json`, `truth.json` and one waveform file per ECG
    /// (paths as recorded in the manifest).
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(), WaveformError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("ecgs"))?;
        for entry in &self.manifest.ecgs {
            let ecg = self.waveforms.get(&entry.ecg_id).ok_or_else(|| WaveformError::UnknownEcg(entry.ecg_id.to_string()))?;
            write_ecg_file(ecg, dir.join(&entry.path))?;
        }
        self.manifest.save(dir.join("manifest.json"))?;
        std::fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&self.truth)?)?;
        Ok(())
    }
}

const DAY: i64 = 86_400;
// stream ids within a patient's seed
const STREAM_CORE: u64 = 0;
const STREAM_WAVE: u64 = 1;

/// Generates a fully deterministic cohort with waveforms held in memory.
pub fn generate_synthetic_cohort(config: &SynthConfig, seed: u64) -> Result<SyntheticCohort, WaveformError> {
    generate_with_format(config, seed, EcgFileFormat::Binary)
}

pub fn generate_with_format(
    config: &SynthConfig,
    seed: u64,
    format: EcgFileFormat,
) -> Result<SyntheticCohort, WaveformError> {
    config.validate()?;
    let death_intercept = calibrate_intercept(config.event_rate, config.outcome_slope);
    let nonfatal_intercept = calibrate_intercept(config.nonfatal_mace_rate, config.outcome_slope);
    let rcri_intercepts: Vec<f64> =
        RCRI_PREVALENCE.iter().map(|&p| calibrate_intercept(p, config.clinical_signal)).collect();
    let origin = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).single().expect("valid date");

    let mut manifest = DatasetManifest::default();
    let mut records = Vec::new();
    let mut truth = BTreeMap::new();

    for pi in 0..config.n_patients {
        let mut core = patient_rng(seed, pi, STREAM_CORE);
        let mut wave = patient_rng(seed, pi, STREAM_WAVE);
        let patient_id = PatientId(format!("P{pi:06}"));
        let z: f64 = StandardNormal.sample(&mut core);

        let components: Vec<bool> = rcri_intercepts
            .iter()
            .map(|&c| core.gen::<f64>() < sigmoid(c + config.clinical_signal * z))
            .collect();
        let age_noise: f64 = StandardNormal.sample(&mut core);
        let age = (65.0 + 15.0 * age_noise + 4.0 * config.clinical_signal * z).clamp(18.0, 100.0).round();
        let sex = if core.gen::<f64>() < 0.45 { Sex::Female } else { Sex::Male };
        manifest.profiles.push(ClinicalProfile {
            patient_id: patient_id.clone(),
            ischemic_heart_disease: components[0],
            congestive_heart_failure: components[1],
            cerebrovascular_disease: components[2],
            insulin_use: components[3],
            creatinine_gt_2mgdl: components[4],
            elevated_risk_procedure: components[5],
            age,
            sex,
        });

        // procedures and outcomes
        let mut when = origin + Duration::seconds(core.gen_range(0..5 * 365 * DAY));
        let p_death = sigmoid(death_intercept + config.outcome_slope * z);
        let p_nonfatal = sigmoid(nonfatal_intercept + config.outcome_slope * z);
        let mut proc_times = Vec::new();
        for k in 0..config.procedures_per_patient {
            if k > 0 {
                when += Duration::seconds(core.gen_range(45 * DAY..400 * DAY));
            }
            let procedure_id = format!("Q{pi:06}-{k}");
            let setting = if core.gen::<f64>() < 0.75 { Setting::OperatingRoom } else { Setting::CathOrEndoscopy };
            let cardiac = core.gen::<f64>() < 0.4;
            let elective = core.gen::<f64>() < 0.6;
            manifest.procedures.push(ProcedureRecord {
                procedure_id: procedure_id.as_str().into(),
                patient_id: patient_id.clone(),
                performed_at: when,
                setting,
                cardiac,
                elective,
                elevated_risk: components[5],
            });
            let death = core.gen::<f64>() < p_death;
            let nonfatal = core.gen::<f64>() < p_nonfatal;
            let which = core.gen_range(0..4);
            manifest.outcomes.push(OutcomeRecord {
                procedure_id: procedure_id.as_str().into(),
                death,
                myocardial_infarction: nonfatal && which == 0,
                cardiac_arrest: nonfatal && which == 1,
                heart_block: nonfatal && which == 2,
                pulmonary_edema: nonfatal && which == 3,
                window_days: 30,
            });
            proc_times.push(when);
        }

        // ECGs: the first per procedure lies inside the 30-day window,
        // extras spread over the preceding 60 days.
        let abnormality = Abnormality::from_latent(z, config.waveform_signal);
        for k in 0..config.ecgs_per_patient {
            let target = proc_times[k % proc_times.len()];
            let lead_seconds = if k < proc_times.len() {
                core.gen_range(1800..25 * DAY)
            } else {
                core.gen_range(DAY..60 * DAY)
            };
            let acquired_at = target - Duration::seconds(lead_seconds);
            let ecg_id = EcgId(format!("E{pi:06}-{k}"));
            let (samples, planted) = synthesize_waveform(&mut wave, &abnormality, z, config.noise_mv);
            let meta = EcgMeta::new(ecg_id.clone(), patient_id.clone(), acquired_at);
            records.push(EcgRecord::from_parts(meta, samples)?);
            manifest.ecgs.push(EcgEntry {
                ecg_id: ecg_id.clone(),
                patient_id: patient_id.clone(),
                acquired_at,
                path: format!("ecgs/{}.{}", ecg_id, format.extension()),
            });
            truth.insert(ecg_id, planted);
        }
    }

    let ids: Vec<PatientId> = manifest.profiles.iter().map(|p| p.patient_id.clone()).collect();
    manifest.splits = split_patients(&ids, config.split_ratios, seed)?;
    manifest.validate()?;
    Ok(SyntheticCohort { manifest, waveforms: MemoryStore::new(records), truth })
}

// ischemic heart disease, heart failure, cerebrovascular disease, insulin,
// creatinine > 2 mg/dL, elevated-risk procedure
const RCRI_PREVALENCE: [f64; 6] = [0.22, 0.18, 0.06, 0.065, 0.095, 0.18];

fn patient_rng(seed: u64, patient: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((patient as u64) << 4 | stream);
    rng
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intercept `b` with `E[sigmoid(b + slope * z)] = rate` for `z ~ N(0, 1)`.
pub(crate) fn calibrate_intercept(rate: f64, slope: f64) -> f64 {
    let mean_prob = |b: f64| {
        let (lo, hi, steps) = (-8.0f64, 8.0f64, 1600);
        let h = (hi - lo) / steps as f64;
        (0..=steps)
            .map(|i| {
                let z = lo + i as f64 * h;
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                w * (-0.5 * z * z).exp() * sigmoid(b + slope * z)
            })
            .sum::<f64>()
            * h
            / (2.0 * std::f64::consts::PI).sqrt()
    };
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_prob(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Abnormality {
    qrs_width: f64,
    ectopics: usize,
}

impl Abnormality {
    fn from_latent(z: f64, waveform_signal: f64) -> Self {
        let severity = waveform_signal * (z - 0.5).max(0.0);
        Self { qrs_width: 1.0 + (severity / 2.0).min(1.0), ectopics: ((2.0 * severity).round() as usize).min(12) }
    }
}

// Per-lead projections of the P, QRS, T and ectopic sources.
const P_GAIN: [f64; N_LEADS] = [0.5, 0.8, 0.3, -0.6, 0.2, 0.55, 0.3, 0.4, 0.4, 0.45, 0.45, 0.4];
const QRS_GAIN: [f64; N_LEADS] = [0.8, 1.0, 0.4, -0.9, 0.35, 0.7, -0.6, -0.3, 0.5, 1.2, 1.1, 0.9];
const T_GAIN: [f64; N_LEADS] = [0.6, 0.8, 0.3, -0.7, 0.3, 0.55, -0.1, 0.6, 0.8, 0.9, 0.8, 0.6];
const ECTOPIC_GAIN: [f64; N_LEADS] = [1.0, 0.8, -0.5, -0.9, 0.9, -0.3, 1.2, 1.4, 1.2, 0.9, 0.7, 0.6];

const ECTOPIC_SIGMA_S: f64 = 0.024;
const ECTOPIC_AMP_MV: f64 = 1.6;

fn add_gaussian(signal: &mut [f64], center_s: f64, sigma_s: f64, amp: f64) {
    let fs = f64::from(SAMPLE_RATE_HZ);
    let c = center_s * fs;
    let sd = sigma_s * fs;
    let lo = (c - 5.0 * sd).floor().max(0.0) as usize;
    let hi = ((c + 5.0 * sd).ceil().max(0.0) as usize).min(signal.len());
    for (i, v) in signal.iter_mut().enumerate().take(hi).skip(lo) {
        let d = (i as f64 - c) / sd;
        *v += amp * (-0.5 * d * d).exp();
    }
}

fn span(center_s: f64, before_s: f64, after_s: f64) -> Option<(usize, usize)> {
    let fs = f64::from(SAMPLE_RATE_HZ);
    let start = ((center_s - before_s) * fs).floor().max(0.0) as usize;
    let end = (((center_s + after_s) * fs).ceil().max(0.0) as usize).min(N_SAMPLES);
    (start < end).then_some((start, end))
}

fn synthesize_waveform(
    rng: &mut ChaCha8Rng,
    abnormality: &Abnormality,
    latent: f64,
    noise_mv: f64,
) -> (Vec<f32>, PlantedTruth) {
    let duration = N_SAMPLES as f64 / f64::from(SAMPLE_RATE_HZ);
    let heart_rate = rng.gen_range(50.0..110.0);
    let rr = 60.0 / heart_rate;
    let w = abnormality.qrs_width;

    let mut p_src = vec![0f64; N_SAMPLES];
    let mut qrs_src = vec![0f64; N_SAMPLES];
    let mut t_src = vec![0f64; N_SAMPLES];
    let mut ectopic_src = vec![0f64; N_SAMPLES];
    let mut widened_qrs_spans = Vec::new();

    let mut r_time = rng.gen_range(0.0..rr);
    while r_time < duration + 0.5 {
        add_gaussian(&mut p_src, r_time - 0.16, 0.012, 0.12);
        add_gaussian(&mut qrs_src, r_time - 0.025 * w, 0.008 * w, -0.12);
        add_gaussian(&mut qrs_src, r_time, 0.010 * w, 1.1);
        add_gaussian(&mut qrs_src, r_time + 0.025 * w, 0.009 * w, -0.25);
        add_gaussian(&mut t_src, r_time + 0.26 * rr.sqrt(), 0.045, 0.3);
        if w > 1.0 && r_time < duration {
            if let Some(s) = span(r_time, 0.05 * w, 0.055 * w) {
                widened_qrs_spans.push(s);
            }
        }
        r_time += rr * rng.gen_range(0.97..1.03);
    }

    let mut ectopic_spans = Vec::new();
    for _ in 0..abnormality.ectopics {
        let t = rng.gen_range(0.2..duration - 0.2);
        add_gaussian(&mut ectopic_src, t, ECTOPIC_SIGMA_S, ECTOPIC_AMP_MV);
        add_gaussian(&mut ectopic_src, t + 0.06, 0.04, -0.5 * ECTOPIC_AMP_MV);
        if let Some(s) = span(t, 3.0 * ECTOPIC_SIGMA_S, 0.06 + 2.0 * 0.04) {
            ectopic_spans.push(s);
        }
    }
    ectopic_spans.sort_unstable();

    let noise = Normal::new(0.0, noise_mv.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut samples = Vec::with_capacity(N_LEADS * N_SAMPLES);
    for lead in 0..N_LEADS {
        let wander_hz = rng.gen_range(0.15..0.5);
        let wander_phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let wander_amp = rng.gen_range(0.05..0.2);
        for i in 0..N_SAMPLES {
            let t = i as f64 / f64::from(SAMPLE_RATE_HZ);
            let v = P_GAIN[lead] * p_src[i]
                + QRS_GAIN[lead] * qrs_src[i]
                + T_GAIN[lead] * t_src[i]
                + ECTOPIC_GAIN[lead] * ectopic_src[i]
                + wander_amp * (std::f64::consts::TAU * wander_hz * t + wander_phase).sin()
                + if noise_mv > 0.0 { noise.sample(rng) } else { 0.0 };
            samples.push(v as f32);
        }
    }

    let truth = PlantedTruth {
        latent_risk: latent,
        heart_rate_bpm: heart_rate,
        qrs_width_factor: w,
        ectopic_count: abnormality.ectopics,
        ectopic_spans,
        widened_qrs_spans,
    };
    (samples, truth)
}

/// Rank-based AUC used only for generator self-checks.
#[cfg(test)]
fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            den += 1.0;
            num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
        }
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::manifest::Target;
    use crate::waveform::{link_ecgs_to_procedures, LinkMode};

    fn small(n: usize) -> SynthConfig {
        SynthConfig { n_patients: n, ..Default::default() }
    }

    fn oracle_auc(cohort: &SyntheticCohort, target: Target) -> f64 {
        let outcomes = cohort.manifest.outcome_index();
        let pairs = link_ecgs_to_procedures(&cohort.manifest, LinkMode::Evaluation).pairs;
        let scores: Vec<f64> = pairs.iter().map(|p| cohort.truth[&p.ecg_id].severity()).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| outcomes[&p.procedure_id].label(target)).collect();
        pair_auc(&scores, &labels)
    }

    #[test]
    fn intercept_calibration_hits_rate() {
        for (rate, slope) in [(0.018, 3.0), (0.2, 0.5), (0.06, 0.0)] {
            let b = calibrate_intercept(rate, slope);
            // Monte Carlo check of the quadrature
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let n = 400_000;
            let mean: f64 = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sigmoid(b + slope * z)
                })
                .sum::<f64>()
                / n as f64;
            assert!((mean - rate).abs() < 0.002, "rate {rate} slope {slope}: {mean}");
        }
    }

    #[test]
    fn rejects_rates_outside_unit_interval() {
        for rate in [0.0, 1.0, -0.1, 1.5] {
            let cfg = SynthConfig { event_rate: rate, ..small(5) };
            assert!(matches!(generate_synthetic_cohort(&cfg, 1), Err(WaveformError::BadConfig(_))));
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = SynthConfig { ecgs_per_patient: 2, procedures_per_patient: 2, ..small(40) };
        let a = generate_synthetic_cohort(&cfg, 11).unwrap();
        let b = generate_synthetic_cohort(&cfg, 11).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.truth, b.truth);
        for e in &a.manifest.ecgs {
            assert_eq!(a.waveforms.get(&e.ecg_id), b.waveforms.get(&e.ecg_id));
        }
        a.manifest.validate().unwrap();
        a.manifest.validate_waveforms(&a.waveforms).unwrap();
        // every procedure has its own in-window ECG
        let eval = link_ecgs_to_procedures(&a.manifest, LinkMode::Evaluation);
        assert_eq!(eval.pairs.len(), a.manifest.procedures.len());
        let c = generate_synthetic_cohort(&cfg, 12).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn no_signal_plants_nothing() {
        let cfg = SynthConfig { waveform_signal: 0.0, clinical_signal: 0.0, ..small(60) };
        let c = generate_synthetic_cohort(&cfg, 5).unwrap();
        assert!(c.truth.values().all(|t| !t.is_abnormal()));
    }

    #[test]
    fn outcomes_independent_of_waveform_signal() {
        let strong = generate_synthetic_cohort(&small(80), 9).unwrap();
        let none = generate_synthetic_cohort(&SynthConfig { waveform_signal: 0.0, ..small(80) }, 9).unwrap();
        assert_eq!(strong.manifest.outcomes, none.manifest.outcomes);
        assert_eq!(strong.manifest.profiles, none.manifest.profiles);
    }

    #[test]
    fn planted_oracle_separates_default_cohort() {
        let cohort = generate_synthetic_cohort(&small(2500), 2024).unwrap();
        let auc = oracle_auc(&cohort, Target::Death);
        assert!(auc >= 0.95, "oracle AUC {auc}");
    }

    #[test]
    fn oracle_auc_monotone_in_waveform_signal() {
        let seeds = 0..10u64;
        let mean_auc = |signal: f64| {
            seeds
                .clone()
                .map(|s| {
                    let cfg = SynthConfig { waveform_signal: signal, event_rate: 0.1, ..small(300) };
                    oracle_auc(&generate_synthetic_cohort(&cfg, s).unwrap(), Target::Death)
                })
                .sum::<f64>()
                / 10.0
        };
        let aucs: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0].iter().map(|&s| mean_auc(s)).collect();
        assert!((aucs[0] - 0.5).abs() < 1e-12);
        for w in aucs.windows(2) {
            assert!(w[1] >= w[0], "{aucs:?}");
        }
    }

    #[test]
    fn written_files_are_byte_identical_across_runs() {
        let cfg = small(12);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_synthetic_cohort(&cfg, 4).unwrap().write_to_dir(d1.path()).unwrap();
        generate_synthetic_cohort(&cfg, 4).unwrap().write_to_dir(d2.path()).unwrap();
        for name in ["manifest.json", "truth.json", "ecgs/E000003-0.pecg"] {
            assert_eq!(std::fs::read(d1.path().join(name)).unwrap(), std::fs::read(d2.path().join(name)).unwrap());
        }
        let loaded = DatasetManifest::load(d1.path().join("manifest.json")).unwrap();
        loaded.validate_waveforms(&crate::waveform::DirectoryStore::new(d1.path())).unwrap();
    }
}
