use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::waveform::{ClinicalProfile, PlantedTruth, Sex};

pub const RCRI_FEATURE_NAMES: [&str; 8] = [
    "ischemic_heart_disease",
    "congestive_heart_failure",
    "cerebrovascular_disease",
    "insulin_use",
    "creatinine_gt_2mgdl",
    "elevated_risk_procedure",
    "age",
    "male",
];

pub const STRUCTURED_FEATURE_NAMES: [&str; 15] = [
    "ventricular_rate_bpm",
    "atrial_rate_bpm",
    "pr_interval_ms",
    "qrs_duration_ms",
    "qt_ms",
    "qtc_ms",
    "p_axis_deg",
    "r_axis_deg",
    "t_axis_deg",
    "age",
    "premature_ventricular_complexes",
    "wide_qrs",
    "sinus_tachycardia",
    "sinus_bradycardia",
    "abnormal_ecg",
];

/// Machine measurements and reader flags of the kind printed on an ECG
/// report. Intervals are in milliseconds, rates in beats per minute and axes
/// in degrees on [0, 360).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredEcgFeatures {
    pub ventricular_rate_bpm: f64,
    pub atrial_rate_bpm: f64,
    pub pr_interval_ms: f64,
    pub qrs_duration_ms: f64,
    pub qt_ms: f64,
    pub qtc_ms: f64,
    pub p_axis_deg: f64,
    pub r_axis_deg: f64,
    pub t_axis_deg: f64,
    pub age: f64,
    pub premature_ventricular_complexes: bool,
    pub wide_qrs: bool,
    pub sinus_tachycardia: bool,
    pub sinus_bradycardia: bool,
    pub abnormal_ecg: bool,
}

const BASE_QRS_MS: f64 = 90.0;
const WIDE_QRS_MS: f64 = 120.0;

fn noisy<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("positive sd").sample(rng)
}

impl StructuredEcgFeatures {
    /// Simulated measurements for a synthetic ECG: the planted rate and QRS
    /// widening plus measurement noise, with reader flags derived from the
    /// measured values and the planted ectopy.
    pub fn measure<R: Rng>(truth: &PlantedTruth, profile: &ClinicalProfile, rng: &mut R) -> Self {
        let rate = noisy(rng, truth.heart_rate_bpm, 2.0).max(20.0);
        let ectopic = truth.ectopic_count as f64;
        let ventricular_rate_bpm = rate;
        let atrial_rate_bpm = noisy(rng, rate - ectopic, 2.0).max(20.0);
        let pr_interval_ms = noisy(rng, 160.0, 15.0).max(80.0);
        let qrs_duration_ms = noisy(rng, BASE_QRS_MS * truth.qrs_width_factor, 5.0).max(40.0);
        let rr_s = 60.0 / rate;
        let qtc_ms = noisy(rng, 410.0 + 0.5 * (qrs_duration_ms - BASE_QRS_MS), 15.0).max(300.0);
        let qt_ms = qtc_ms * rr_s.sqrt();
        let axis = |rng: &mut R, mean: f64, sd: f64| noisy(rng, mean, sd).rem_euclid(360.0);
        let p_axis_deg = axis(rng, 55.0, 15.0);
        let r_axis_deg = axis(rng, 40.0 - 10.0 * (truth.qrs_width_factor - 1.0), 25.0);
        let t_axis_deg = axis(rng, 45.0, 20.0);
        let premature_ventricular_complexes = truth.ectopic_count > 0;
        let wide_qrs = qrs_duration_ms >= WIDE_QRS_MS;
        let sinus_tachycardia = rate > 100.0;
        let sinus_bradycardia = rate < 60.0;
        let abnormal_ecg = premature_ventricular_complexes || wide_qrs;
        Self {
            ventricular_rate_bpm,
            atrial_rate_bpm,
            pr_interval_ms,
            qrs_duration_ms,
            qt_ms,
            qtc_ms,
            p_axis_deg,
            r_axis_deg,
            t_axis_deg,
            age: profile.age,
            premature_ventricular_complexes,
            wide_qrs,
            sinus_tachycardia,
            sinus_bradycardia,
            abnormal_ecg,
        }
    }

    /// Values in [`STRUCTURED_FEATURE_NAMES`] order, flags as 0/1.
    pub fn to_vec(&self) -> Vec<f64> {
        let b = |v: bool| f64::from(u8::from(v));
        vec![
            self.ventricular_rate_bpm,
            self.atrial_rate_bpm,
            self.pr_interval_ms,
            self.qrs_duration_ms,
            self.qt_ms,
            self.qtc_ms,
            self.p_axis_deg,
            self.r_axis_deg,
            self.t_axis_deg,
            self.age,
            b(self.premature_ventricular_complexes),
            b(self.wide_qrs),
            b(self.sinus_tachycardia),
            b(self.sinus_bradycardia),
            b(self.abnormal_ecg),
        ]
    }
}

/// RCRI components, age and sex as a feature row per profile, in
/// [`RCRI_FEATURE_NAMES`] order.
pub fn rcri_feature_matrix(profiles: &[&ClinicalProfile]) -> Vec<Vec<f64>> {
    profiles
        .iter()
        .map(|p| {
            let mut row: Vec<f64> = p.rcri_components().iter().map(|&c| f64::from(u8::from(c))).collect();
            row.push(p.age);
            row.push(f64::from(u8::from(p.sex == Sex::Male)));
            row
        })
        .collect()
}
