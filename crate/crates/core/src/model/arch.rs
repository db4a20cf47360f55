use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::ConvSpec;
use crate::waveform::{N_LEADS, N_SAMPLES};

/// Width of the fused clinical vector: age/100, sex, six RCRI flags.
pub const CLINICAL_FEATURES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemConfig {
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
    /// Number of stacked atrous convolutions, each with the same dilation and stride.
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub expansion_factor: usize,
    pub out_channels: usize,
    pub depthwise_kernel: usize,
    /// Stride of the first block; later blocks use stride 1.
    pub stride: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub input_leads: usize,
    pub input_len: usize,
    pub stem: StemConfig,
    pub stages: Vec<StageConfig>,
    pub head_channels: usize,
    pub clinical_feature_width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Stem,
    Expand,
    Depthwise,
    Project,
    Head,
}

/// One convolution + batch norm (+ relu6) unit with resolved sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConvLayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub conv: ConvSpec,
    pub in_len: usize,
    pub out_len: usize,
    pub activation: bool,
}

impl ConvLayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_ch, self.in_ch / self.conv.groups, self.kernel]
    }

    pub fn fan_in(&self) -> usize {
        self.in_ch / self.conv.groups * self.kernel
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockSpec {
    pub expand: Option<ConvLayerSpec>,
    pub depthwise: ConvLayerSpec,
    pub project: ConvLayerSpec,
    pub residual: bool,
}

/// Fully resolved layer inventory of an [`ArchitectureConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerPlan {
    pub stem: Vec<ConvLayerSpec>,
    pub blocks: Vec<BlockSpec>,
    pub head: ConvLayerSpec,
    pub dense_in: usize,
    pub dense_out: usize,
}

impl LayerPlan {
    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvLayerSpec> {
        self.stem
            .iter()
            .chain(self.blocks.iter().flat_map(|b| b.expand.iter().chain([&b.depthwise, &b.project])))
            .chain(std::iter::once(&self.head))
    }

    pub fn final_len(&self) -> usize {
        self.head.out_len
    }
}

impl ArchitectureConfig {
    /// The frozen configuration: two atrous stem convolutions followed by
    /// five inverted-residual stages and a 256-channel head.
    pub fn canonical() -> Self {
        let stage = |out_channels, repeats| StageConfig {
            expansion_factor: 6,
            out_channels,
            depthwise_kernel: 5,
            stride: 2,
            repeats,
        };
        Self {
            input_leads: N_LEADS,
            input_len: N_SAMPLES,
            stem: StemConfig { out_channels: 16, kernel: 7, dilation: 2, stride: 2, layers: 2 },
            stages: vec![stage(16, 2), stage(24, 1), stage(40, 2), stage(80, 1), stage(128, 1)],
            head_channels: 256,
            clinical_feature_width: 0,
        }
    }

    /// Copy with a different stem dilation and stride (the grid-searched pair).
    pub fn with_stem(&self, dilation: usize, stride: usize) -> Self {
        let mut c = self.clone();
        c.stem.dilation = dilation;
        c.stem.stride = stride;
        c
    }

    pub fn with_clinical(&self, enabled: bool) -> Self {
        let mut c = self.clone();
        c.clinical_feature_width = if enabled { CLINICAL_FEATURES } else { 0 };
        c
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.plan().map(|_| ())
    }

    pub fn plan(&self) -> Result<LayerPlan, ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        let s = &self.stem;
        if self.input_leads == 0 || self.input_len == 0 || self.head_channels == 0 {
            return bad("input and head sizes must be positive".into());
        }
        if s.out_channels == 0 || s.kernel == 0 || s.dilation == 0 || s.stride == 0 || s.layers == 0 {
            return bad(format!("stem sizes must be positive: {s:?}"));
        }
        if ![0, CLINICAL_FEATURES].contains(&self.clinical_feature_width) {
            return bad(format!(
                "clinical_feature_width must be 0 or {CLINICAL_FEATURES}, got {}",
                self.clinical_feature_width
            ));
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.expansion_factor == 0 || st.out_channels == 0 || st.depthwise_kernel == 0 || st.stride == 0 || st.repeats == 0 {
                return bad(format!("stage {i} sizes must be positive: {st:?}"));
            }
        }

        let mut len = self.input_len;
        let mut ch = self.input_leads;
        let layer = |name: String, kind, in_ch, out_ch, kernel, conv: ConvSpec, len: &mut usize, activation| {
            let span = conv.dilation * (kernel - 1) + 1;
            if *len < span {
                return Err(ModelError::InvalidConfig(format!(
                    "{name}: sequence length {} is shorter than the kernel span {span}",
                    *len
                )));
            }
            let out_len = conv
                .out_len(*len, kernel)
                .ok_or_else(|| ModelError::InvalidConfig(format!("{name}: sequence length {} collapses to zero", *len)))?;
            let spec = ConvLayerSpec { name, kind, in_ch, out_ch, kernel, conv, in_len: *len, out_len, activation };
            *len = out_len;
            Ok::<_, ModelError>(spec)
        };

        let mut stem = Vec::new();
        for i in 0..s.layers {
            let conv = ConvSpec::new(s.stride, s.dilation, 1, same_padding(s.kernel, s.dilation));
            stem.push(layer(format!("stem.{i}"), LayerKind::Stem, ch, s.out_channels, s.kernel, conv, &mut len, true)?);
            ch = s.out_channels;
        }

        let mut blocks = Vec::new();
        for (si, st) in self.stages.iter().enumerate() {
            for r in 0..st.repeats {
                let stride = if r == 0 { st.stride } else { 1 };
                let name = format!("stage{si}.block{r}");
                let hidden = ch * st.expansion_factor;
                let in_ch = ch;
                let expand = (st.expansion_factor != 1)
                    .then(|| layer(format!("{name}.expand"), LayerKind::Expand, ch, hidden, 1, ConvSpec::default(), &mut len, true))
                    .transpose()?;
                let dw = ConvSpec::new(stride, 1, hidden, same_padding(st.depthwise_kernel, 1));
                let depthwise =
                    layer(format!("{name}.depthwise"), LayerKind::Depthwise, hidden, hidden, st.depthwise_kernel, dw, &mut len, true)?;
                let project = layer(
                    format!("{name}.project"),
                    LayerKind::Project,
                    hidden,
                    st.out_channels,
                    1,
                    ConvSpec::default(),
                    &mut len,
                    false,
                )?;
                let residual = stride == 1 && in_ch == st.out_channels;
                blocks.push(BlockSpec { expand, depthwise, project, residual });
                ch = st.out_channels;
            }
        }
        let head =
            layer("head".into(), LayerKind::Head, ch, self.head_channels, 1, ConvSpec::default(), &mut len, true)?;
        Ok(LayerPlan {
            stem,
            blocks,
            head,
            dense_in: self.head_channels + self.clinical_feature_width,
            dense_out: 1,
        })
    }
}

/// "Same" padding `d·(k−1)/2` for a kernel of size `k` and dilation `d`.
pub fn same_padding(kernel: usize, dilation: usize) -> usize {
    dilation * (kernel - 1) / 2
}
