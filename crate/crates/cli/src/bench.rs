//! End-to-end single-ECG latency: parse, validate, preprocess, predict.

use std::time::Instant;

use anyhow::Result;
use preopnet::model::Predictor;
use preopnet::waveform::{
    decode_binary, encode_binary, generate_synthetic_cohort, validate_ecg, ClinicalProfile, EcgMeta, PatientId, Sex,
    SynthConfig,
};
use serde::{Deserialize, Serialize};

/// Timed runs discarded before measuring.
pub const WARMUP: usize = 5;
/// Acceptance ceiling on the mean latency.
pub const LATENCY_BUDGET_S: f64 = 0.050;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetition: usize,
    pub count: usize,
    pub latencies_ms: Vec<f64>,
    pub mean_ms: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std_ms: f64,
    pub hardware: String,
}

impl BenchReport {
    pub fn from_latencies(repetition: usize, latencies_ms: Vec<f64>, hardware: String) -> Self {
        let n = latencies_ms.len() as f64;
        let mean_ms = latencies_ms.iter().sum::<f64>() / n;
        let std_ms = if latencies_ms.len() > 1 {
            (latencies_ms.iter().map(|v| (v - mean_ms).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { repetition, count: latencies_ms.len(), latencies_ms, mean_ms, std_ms, hardware }
    }
}

pub fn hardware_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).map(|l| l.split(':').nth(1).unwrap_or("").trim().to_string()))
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{cpu}; {} {}; single thread; compute only (no network); budget {:.0} ms/ECG",
        std::env::consts::OS,
        std::env::consts::ARCH,
        LATENCY_BUDGET_S * 1000.0
    )
}

/// Synthetic ECGs in the binary file format, deterministic in `seed`.
pub fn synthetic_ecg_files(count: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    let cfg = SynthConfig { n_patients: count, ..Default::default() };
    let cohort = generate_synthetic_cohort(&cfg, seed)?;
    Ok(cohort
        .manifest
        .ecgs
        .iter()
        .take(count)
        .map(|e| encode_binary(cohort.waveforms.get(&e.ecg_id).expect("generated ECG")))
        .collect())
}

/// Times every file once per repetition after [`WARMUP`] untimed runs.
pub fn run_bench(predictor: &Predictor, files: &[Vec<u8>], repetitions: usize) -> Result<Vec<BenchReport>> {
    anyhow::ensure!(!files.is_empty(), "bench needs at least one ECG");
    let profile = predictor.uses_clinical().then(|| ClinicalProfile {
        patient_id: PatientId("bench".into()),
        ischemic_heart_disease: false,
        congestive_heart_failure: false,
        cerebrovascular_disease: false,
        insulin_use: false,
        creatinine_gt_2mgdl: false,
        elevated_risk_procedure: true,
        age: 65.0,
        sex: Sex::Female,
    });
    let run = |bytes: &[u8]| -> Result<f64> {
        let ecg = validate_ecg(decode_binary(bytes)?, EcgMeta::anonymous())?;
        Ok(predictor.predict(&ecg, profile.as_ref())?)
    };
    for bytes in files.iter().cycle().take(WARMUP) {
        run(bytes)?;
    }
    let hardware = hardware_note();
    (0..repetitions.max(1))
        .map(|rep| {
            let lat = files
                .iter()
                .map(|b| {
                    let t = Instant::now();
                    let p = run(b)?;
                    std::hint::black_box(p);
                    Ok(t.elapsed().as_secs_f64() * 1000.0)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BenchReport::from_latencies(rep, lat, hardware.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_matches_recomputation() {
        let r = BenchReport::from_latencies(0, vec![2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0], String::new());
        assert_eq!(r.mean_ms, 5.0);
        assert!((r.std_ms - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(r.count, 8);
    }
}
