//! Baseline-wander removal, low-pass filtering and per-lead normalization.

use serde::{Deserialize, Serialize};

use super::ecg::{EcgRecord, N_SAMPLES, SAMPLE_RATE_HZ};
use super::WaveformError;

const NORMALIZE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Per-lead zero mean, unit standard deviation.
    ZScore,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub lowpass_hz: f64,
    pub baseline_window_s: f64,
    pub normalization: Normalization,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { lowpass_hz: 40.0, baseline_window_s: 2.0, normalization: Normalization::ZScore }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), WaveformError> {
        let nyquist = f64::from(SAMPLE_RATE_HZ) / 2.0;
        if !(self.lowpass_hz > 0.0 && self.lowpass_hz < nyquist) {
            return Err(WaveformError::BadConfig(format!(
                "low-pass cutoff {} Hz must lie in (0, {nyquist})",
                self.lowpass_hz
            )));
        }
        if !(self.baseline_window_s > 0.0 && self.baseline_window_s.is_finite()) {
            return Err(WaveformError::BadConfig(format!(
                "baseline window {} s must be positive",
                self.baseline_window_s
            )));
        }
        Ok(())
    }

    fn half_window(&self) -> usize {
        let samples = (self.baseline_window_s * f64::from(SAMPLE_RATE_HZ)).round() as usize;
        (samples / 2).max(1)
    }
}

/// Per lead: subtract a moving-median baseline, apply a single-pole
/// low-pass, then normalize. Shape is preserved.
pub fn preprocess(ecg: &EcgRecord, config: &PreprocessConfig) -> Result<EcgRecord, WaveformError> {
    config.validate()?;
    let half = config.half_window();
    let dt = 1.0 / f64::from(SAMPLE_RATE_HZ);
    let rc = 1.0 / (2.0 * std::f64::consts::PI * config.lowpass_hz);
    let alpha = dt / (rc + dt);

    let mut out = Vec::with_capacity(ecg.samples().len());
    let mut lead_buf = vec![0f64; N_SAMPLES];
    for lead in ecg.leads() {
        let baseline = moving_median(lead, half);
        for ((dst, &x), b) in lead_buf.iter_mut().zip(lead).zip(&baseline) {
            *dst = f64::from(x) - b;
        }
        let mut y = lead_buf[0];
        for v in lead_buf.iter_mut() {
            y += alpha * (*v - y);
            *v = y;
        }
        if config.normalization == Normalization::ZScore {
            let n = lead_buf.len() as f64;
            let mean = lead_buf.iter().sum::<f64>() / n;
            let var = lead_buf.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let scale = 1.0 / (var.sqrt() + NORMALIZE_EPS);
            for v in lead_buf.iter_mut() {
                *v = (*v - mean) * scale;
            }
        }
        out.extend(lead_buf.iter().map(|&v| v as f32));
    }
    Ok(ecg.with_samples(out)?)
}

/// Centered moving median with window `2 * half + 1`.
///
/// The signal is extended by odd (point) reflection about each endpoint so
/// a linear trend is reproduced exactly up to the edges. Runs in
/// O(n log n) using a Fenwick tree over value ranks.
pub fn moving_median(signal: &[f32], half: usize) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let ext_len = n + 2 * half;
    let ext: Vec<f64> = (0..ext_len)
        .map(|j| {
            let i = j as isize - half as isize;
            let x = |k: usize| f64::from(signal[k.min(n - 1)]);
            if i < 0 {
                2.0 * x(0) - x((-i) as usize)
            } else if i as usize >= n {
                let over = i as usize - (n - 1);
                2.0 * x(n - 1) - x((n - 1).saturating_sub(over))
            } else {
                x(i as usize)
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..ext_len).collect();
    order.sort_by(|&a, &b| ext[a].total_cmp(&ext[b]).then(a.cmp(&b)));
    let mut rank = vec![0usize; ext_len];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let window = 2 * half + 1;
    let mut tree = Fenwick::new(ext_len);
    for &r in &rank[..window] {
        tree.add(r, 1);
    }
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        if c > 0 {
            tree.add(rank[c - 1], -1);
            tree.add(rank[c + window - 1], 1);
        }
        out.push(ext[order[tree.find_kth(half + 1)]]);
    }
    out
}

struct Fenwick {
    tree: Vec<i32>,
    log: usize,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        let log = usize::BITS as usize - n.leading_zeros() as usize;
        Self { tree: vec![0; n + 1], log }
    }

    fn add(&mut self, idx: usize, delta: i32) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Zero-based index of the k-th (1-based) present element.
    fn find_kth(&self, mut k: usize) -> usize {
        let mut pos = 0;
        for b in (0..=self.log).rev() {
            let next = pos + (1 << b);
            if next < self.tree.len() && (self.tree[next] as usize) < k {
                pos = next;
                k -= self.tree[next] as usize;
            }
        }
        pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::ecg::{validate_ecg, EcgMeta, RawEcg, N_LEADS};
    use proptest::prelude::*;

    fn record(f: impl Fn(usize, usize) -> f32) -> EcgRecord {
        let leads = (0..N_LEADS).map(|l| (0..N_SAMPLES).map(|s| f(l, s)).collect()).collect();
        validate_ecg(RawEcg::from_leads(leads, 500.0), EcgMeta::anonymous()).unwrap()
    }

    /// Direct O(n·w) moving median over the same reflected extension.
    fn naive_median(signal: &[f32], half: usize) -> Vec<f64> {
        let n = signal.len() as isize;
        let at = |i: isize| -> f64 {
            if i < 0 {
                2.0 * signal[0] as f64 - signal[(-i) as usize] as f64
            } else if i >= n {
                2.0 * signal[(n - 1) as usize] as f64 - signal[(2 * (n - 1) - i) as usize] as f64
            } else {
                signal[i as usize] as f64
            }
        };
        (0..n)
            .map(|c| {
                let mut w: Vec<f64> = (c - half as isize..=c + half as isize).map(at).collect();
                w.sort_by(f64::total_cmp);
                w[half]
            })
            .collect()
    }

    #[test]
    fn constant_lead_normalizes_to_zero() {
        let out = preprocess(&record(|_, _| 3.7), &PreprocessConfig::default()).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attenuates_above_cutoff() {
        // analog single-pole gain at 100 Hz with fc = 40 Hz is 1/sqrt(1 + 6.25) ≈ 0.371
        let analog_gain = 1.0 / (1.0f64 + (100.0f64 / 40.0).powi(2)).sqrt();
        assert!((analog_gain - 0.3714).abs() < 1e-3);
        let sine = |_: usize, s: usize| (2.0 * std::f32::consts::PI * 100.0 * s as f32 / 500.0).sin();
        let cfg = PreprocessConfig { normalization: Normalization::None, ..Default::default() };
        let out = preprocess(&record(sine), &cfg).unwrap();
        // skip the filter start-up and the baseline edge windows
        let peak = out.lead(0)[500..4500].iter().fold(0f32, |m, v| m.max(v.abs()));
        assert!(peak < 0.45, "peak {peak}");
        assert!(peak > 0.25, "peak {peak}");
    }

    #[test]
    fn removes_linear_drift_under_spikes() {
        let slope = 0.2f32 / 500.0; // 0.2 mV per second
        let f = move |_: usize, s: usize| slope * s as f32 + if s % 400 < 6 { 1.5 } else { 0.0 };
        let raw = record(f);
        let baseline_oracle = naive_median(raw.lead(0), 500);
        let fast = moving_median(raw.lead(0), 500);
        assert_eq!(fast, baseline_oracle);

        let cfg = PreprocessConfig { normalization: Normalization::None, ..Default::default() };
        let out = preprocess(&raw, &cfg).unwrap();
        // residual drift: least-squares slope of the output times duration
        let y = out.lead(0);
        let n = y.len() as f64;
        let mx = (n - 1.0) / 2.0;
        let my = y.iter().map(|&v| v as f64).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, &v) in y.iter().enumerate() {
            sxy += (i as f64 - mx) * (v as f64 - my);
            sxx += (i as f64 - mx).powi(2);
        }
        let residual = (sxy / sxx * n).abs();
        let original = slope as f64 * n;
        assert!(residual < 0.05 * original, "residual {residual} vs {original}");
    }

    #[test]
    fn bad_config_rejected() {
        let ecg = record(|_, _| 0.0);
        for cfg in [
            PreprocessConfig { lowpass_hz: 0.0, ..Default::default() },
            PreprocessConfig { lowpass_hz: 250.0, ..Default::default() },
            PreprocessConfig { baseline_window_s: 0.0, ..Default::default() },
        ] {
            assert!(matches!(preprocess(&ecg, &cfg), Err(WaveformError::BadConfig(_))));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fenwick_median_matches_naive(values in proptest::collection::vec(-5.0f32..5.0, 1..120), half in 1usize..20) {
            prop_assert_eq!(moving_median(&values, half), naive_median_any(&values, half));
        }

        #[test]
        fn preserves_shape_and_finiteness(amp in 0.0f32..50.0, freq in 0.1f32..200.0, offset in -100.0f32..100.0) {
            let ecg = record(|l, s| offset + amp * (freq * s as f32 / 500.0 + l as f32).sin());
            let out = preprocess(&ecg, &PreprocessConfig::default()).unwrap();
            prop_assert_eq!(out.samples().len(), ecg.samples().len());
            prop_assert!(out.samples().iter().all(|v| v.is_finite()));
        }
    }

    // Same as naive_median but tolerant of signals shorter than the window.
    fn naive_median_any(signal: &[f32], half: usize) -> Vec<f64> {
        let n = signal.len() as isize;
        let clamp = |k: isize| signal[k.clamp(0, n - 1) as usize] as f64;
        let at = |i: isize| -> f64 {
            if i < 0 {
                2.0 * clamp(0) - clamp(-i)
            } else if i >= n {
                2.0 * clamp(n - 1) - clamp((n - 1) - (i - (n - 1)))
            } else {
                clamp(i)
            }
        };
        (0..n)
            .map(|c| {
                let mut w: Vec<f64> = (c - half as isize..=c + half as isize).map(at).collect();
                w.sort_by(f64::total_cmp);
                w[half]
            })
            .collect()
    }
}
