use serde::Serialize;

use super::arch::{ArchitectureConfig, ConvLayerSpec};
use super::ModelError;

/// Reference operation count the canonical configuration is checked against.
pub const REFERENCE_FLOPS: u64 = 57_913_936;
/// Allowed relative deviation from [`REFERENCE_FLOPS`].
pub const FLOPS_TOLERANCE: f64 = 0.10;

/// Multiply-adds count as two operations; a bias adds one per output.
pub fn conv_flops(out_len: usize, out_ch: usize, in_per_group: usize, kernel: usize, bias: bool) -> u64 {
    let macs = (out_len * out_ch * in_per_group * kernel) as u64;
    2 * macs + if bias { (out_len * out_ch) as u64 } else { 0 }
}

pub fn dense_flops(inputs: usize, outputs: usize, bias: bool) -> u64 {
    2 * (inputs * outputs) as u64 + if bias { outputs as u64 } else { 0 }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlopsEntry {
    pub layer: String,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlopsBreakdown {
    pub entries: Vec<FlopsEntry>,
    pub total: u64,
}

impl FlopsBreakdown {
    /// Signed relative deviation from [`REFERENCE_FLOPS`].
    pub fn deviation(&self) -> f64 {
        (self.total as f64 - REFERENCE_FLOPS as f64) / REFERENCE_FLOPS as f64
    }
}

fn conv_bn(l: &ConvLayerSpec) -> u64 {
    let elems = (l.out_len * l.out_ch) as u64;
    let act = if l.activation { elems } else { 0 };
    conv_flops(l.out_len, l.out_ch, l.in_ch / l.conv.groups, l.kernel, false) + elems + act
}

/// Per-layer forward operation counts for a single example. Batch norm and
/// relu6 cost one operation per element, the residual add one per element,
/// pooling one per input element and the sigmoid one per output.
pub fn flops_breakdown(config: &ArchitectureConfig) -> Result<FlopsBreakdown, ModelError> {
    let plan = config.plan()?;
    let mut entries = Vec::new();
    let mut push = |layer: String, flops| entries.push(FlopsEntry { layer, flops });
    for l in &plan.stem {
        push(l.name.clone(), conv_bn(l));
    }
    for b in &plan.blocks {
        for l in b.expand.iter().chain([&b.depthwise, &b.project]) {
            push(l.name.clone(), conv_bn(l));
        }
        if b.residual {
            let name = b.project.name.trim_end_matches(".project").to_string();
            push(format!("{name}.residual"), (b.project.out_len * b.project.out_ch) as u64);
        }
    }
    push(plan.head.name.clone(), conv_bn(&plan.head));
    push("pool".into(), (plan.head.out_len * plan.head.out_ch) as u64);
    push("dense".into(), dense_flops(plan.dense_in, plan.dense_out, true));
    push("sigmoid".into(), plan.dense_out as u64);
    let total = entries.iter().map(|e| e.flops).sum();
    Ok(FlopsBreakdown { entries, total })
}

pub fn count_flops(config: &ArchitectureConfig) -> Result<u64, ModelError> {
    flops_breakdown(config).map(|b| b.total)
}

/// Rejects the canonical configuration when its count leaves the budget.
pub fn check_budget(config: &ArchitectureConfig) -> Result<(), ModelError> {
    if *config != ArchitectureConfig::canonical() {
        return Ok(());
    }
    let b = flops_breakdown(config)?;
    if b.deviation().abs() > FLOPS_TOLERANCE {
        return Err(ModelError::InvalidConfig(format!(
            "canonical configuration counts {} FLOPs, {:+.2}% from {REFERENCE_FLOPS}",
            b.total,
            100.0 * b.deviation()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::arch::{StageConfig, StemConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn primitive_examples() {
        assert_eq!(conv_flops(10, 1, 1, 3, false), 60);
        assert_eq!(dense_flops(4, 2, true), 18);
    }

    #[test]
    fn canonical_total_is_frozen_and_within_budget() {
        let b = flops_breakdown(&ArchitectureConfig::canonical()).unwrap();
        assert_eq!(b.total, 57_812_722);
        assert!(b.deviation().abs() <= FLOPS_TOLERANCE);
        check_budget(&ArchitectureConfig::canonical()).unwrap();
    }

    /// Independent count that re-derives every length by hand.
    fn oracle(c: &ArchitectureConfig) -> u64 {
        let out = |l: usize, k: usize, s: usize, d: usize| (l + 2 * (d * (k - 1) / 2) - d * (k - 1) - 1) / s + 1;
        let mut total = 0u64;
        let (mut l, mut ch) = (c.input_len, c.input_leads);
        for _ in 0..c.stem.layers {
            l = out(l, c.stem.kernel, c.stem.stride, c.stem.dilation);
            total += (2 * l * c.stem.out_channels * ch * c.stem.kernel + 2 * l * c.stem.out_channels) as u64;
            ch = c.stem.out_channels;
        }
        for st in &c.stages {
            for r in 0..st.repeats {
                let s = if r == 0 { st.stride } else { 1 };
                let h = ch * st.expansion_factor;
                if st.expansion_factor != 1 {
                    total += (2 * l * h * ch + 2 * l * h) as u64;
                }
                l = out(l, st.depthwise_kernel, s, 1);
                total += (2 * l * h * st.depthwise_kernel + 2 * l * h) as u64;
                total += (2 * l * st.out_channels * h + l * st.out_channels) as u64;
                if s == 1 && ch == st.out_channels {
                    total += (l * ch) as u64;
                }
                ch = st.out_channels;
            }
        }
        total += (2 * l * c.head_channels * ch + 3 * l * c.head_channels) as u64;
        let din = c.head_channels + c.clinical_feature_width;
        total + (2 * din + 2) as u64
    }

    #[test]
    fn matches_hand_count_on_random_small_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let stages = (0..rng.gen_range(1..4))
                .map(|_| StageConfig {
                    expansion_factor: rng.gen_range(1..5),
                    out_channels: rng.gen_range(2..12),
                    depthwise_kernel: [3, 5][rng.gen_range(0..2)],
                    stride: rng.gen_range(1..3),
                    repeats: rng.gen_range(1..3),
                })
                .collect();
            let c = ArchitectureConfig {
                input_leads: rng.gen_range(1..4),
                input_len: rng.gen_range(200..400),
                stem: StemConfig {
                    out_channels: rng.gen_range(2..8),
                    kernel: [3, 5, 7][rng.gen_range(0..3)],
                    dilation: rng.gen_range(1..4),
                    stride: rng.gen_range(1..3),
                    layers: rng.gen_range(1..3),
                },
                stages,
                head_channels: rng.gen_range(4..16),
                clinical_feature_width: [0, 8][rng.gen_range(0..2)],
            };
            assert_eq!(count_flops(&c).unwrap(), oracle(&c), "{c:?}");
        }
    }

    #[test]
    fn canonical_matches_hand_count() {
        let c = ArchitectureConfig::canonical();
        assert_eq!(count_flops(&c).unwrap(), oracle(&c));
    }
}
