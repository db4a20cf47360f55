use serde::{Deserialize, Serialize};

use super::{ExplainError, ImportanceMap};
use crate::stats::percentile_type7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub quantile: f64,
    pub importance: f64,
    pub normalized: f64,
}

/// Importances rescaled to [0, 1] for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapData {
    pub leads: usize,
    pub segments: usize,
    pub segment_len: usize,
    /// Lead-major; `None` marks cells that were never perturbed.
    pub values: Vec<Option<f64>>,
    pub min: f64,
    pub max: f64,
    pub legend: Vec<LegendEntry>,
}

const LEGEND_QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Min-max normalization over populated cells. When every populated cell
/// has the same importance they all map to 1.0.
pub fn render_heatmap_data(map: &ImportanceMap) -> Result<HeatmapData, ExplainError> {
    let mut raw: Vec<f64> = map.importance.iter().flatten().copied().collect();
    if raw.is_empty() {
        return Err(ExplainError::EmptyMap);
    }
    raw.sort_by(f64::total_cmp);
    let (min, max) = (raw[0], raw[raw.len() - 1]);
    let scale = |v: f64| if max > min { (v - min) / (max - min) } else { 1.0 };
    let legend = LEGEND_QUANTILES
        .iter()
        .map(|&q| {
            let importance = percentile_type7(&raw, q);
            LegendEntry { quantile: q, importance, normalized: scale(importance) }
        })
        .collect();
    Ok(HeatmapData {
        leads: map.leads,
        segments: map.segments,
        segment_len: map.segment_len,
        values: map.importance.iter().map(|v| v.map(scale)).collect(),
        min,
        max,
        legend,
    })
}
