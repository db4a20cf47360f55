use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchitectureConfig, ConvLayerSpec, LayerPlan};
use super::ModelError;
use crate::autodiff::kernels::{conv1d_forward, ConvGeometry};
use crate::autodiff::{stable_sigmoid, BnConfig, BnMode, RunningStats, Scalar, Tape, Tensor, Var};
use crate::autodiff::BCE_EPS;

/// Convolution followed by batch norm, with the layer's resolved sizes.
#[derive(Debug, Clone)]
pub struct ConvBn<T> {
    pub spec: ConvLayerSpec,
    pub weight: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub stats: RunningStats<T>,
}

impl<T: Scalar> ConvBn<T> {
    fn new(spec: &ConvLayerSpec, weight: Vec<T>) -> Self {
        let ch = spec.out_ch;
        Self {
            weight: Tensor::new(spec.weight_shape(), weight).expect("weight sized from spec"),
            gamma: Tensor::full(vec![ch], T::one()),
            beta: Tensor::zeros(vec![ch]),
            stats: RunningStats::new(ch),
            spec: spec.clone(),
        }
    }

    fn cast<U: Scalar>(&self) -> ConvBn<U> {
        let c = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect();
        ConvBn {
            spec: self.spec.clone(),
            weight: self.weight.cast(),
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            stats: RunningStats { mean: c(&self.stats.mean), var: c(&self.stats.var) },
        }
    }

    fn forward(&mut self, tape: &mut Tape<T>, x: Var, mode: BnMode, params: &mut Vec<Var>) -> Result<Var, ModelError> {
        let w = tape.param(self.weight.clone());
        let g = tape.param(self.gamma.clone());
        let b = tape.param(self.beta.clone());
        params.extend([w, g, b]);
        let y = tape.conv1d(x, w, None, self.spec.conv)?;
        let y = tape.batch_norm(y, g, b, &mut self.stats, mode, BnConfig::default())?;
        Ok(if self.spec.activation { tape.relu6(y) } else { y })
    }
}

#[derive(Debug, Clone)]
pub struct Block<T> {
    pub expand: Option<ConvBn<T>>,
    pub depthwise: ConvBn<T>,
    pub project: ConvBn<T>,
    pub residual: bool,
}

impl<T> Block<T> {
    fn layers(&self) -> impl Iterator<Item = &ConvBn<T>> {
        self.expand.iter().chain([&self.depthwise, &self.project])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvBn<T>> {
        self.expand.iter_mut().chain([&mut self.depthwise, &mut self.project])
    }
}

/// Trainable network: atrous stem, inverted-residual stages, 1×1 head,
/// global average pooling and a sigmoid unit over `[pooled, clinical]`.
#[derive(Debug, Clone)]
pub struct PreOpNet<T> {
    config: ArchitectureConfig,
    pub stem: Vec<ConvBn<T>>,
    pub blocks: Vec<Block<T>>,
    pub head: ConvBn<T>,
    pub dense_weight: Tensor<T>,
    pub dense_bias: Tensor<T>,
}

/// Tape handles produced by [`PreOpNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// Probabilities, `[batch, 1]`.
    pub prob: Var,
    /// Parameter leaves in [`PreOpNet::named_params`] order.
    pub params: Vec<Var>,
}

impl<T: Scalar> PreOpNet<T> {
    /// Fan-in scaled uniform initialisation: convolutions draw from
    /// `U(±√(6/fan_in))`, the dense layer from `U(±1/√fan_in)`; batch norm
    /// starts at identity and biases at zero.
    pub fn new(config: &ArchitectureConfig, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, |n, fan_in, dense| {
            let bound = if dense { 1.0 / (fan_in as f64).sqrt() } else { (6.0 / fan_in as f64).sqrt() };
            let dist = Uniform::new_inclusive(-bound, bound);
            (0..n).map(|_| T::of(dist.sample(&mut rng))).collect()
        })
    }

    /// Every weight zero; the output is `sigmoid(0) = 0.5` for any input.
    pub fn zeroed(config: &ArchitectureConfig) -> Result<Self, ModelError> {
        Self::build(config, |n, _, _| vec![T::zero(); n])
    }

    fn build(config: &ArchitectureConfig, mut init: impl FnMut(usize, usize, bool) -> Vec<T>) -> Result<Self, ModelError> {
        super::flops::check_budget(config)?;
        let plan: LayerPlan = config.plan()?;
        let mut conv = |s: &ConvLayerSpec| {
            let n = s.weight_shape().iter().product();
            ConvBn::new(s, init(n, s.fan_in(), false))
        };
        let stem = plan.stem.iter().map(&mut conv).collect();
        let blocks = plan
            .blocks
            .iter()
            .map(|b| Block {
                expand: b.expand.as_ref().map(&mut conv),
                depthwise: conv(&b.depthwise),
                project: conv(&b.project),
                residual: b.residual,
            })
            .collect();
        let head = conv(&plan.head);
        let dense = init(plan.dense_out * plan.dense_in, plan.dense_in, true);
        Ok(Self {
            config: config.clone(),
            stem,
            blocks,
            head,
            dense_weight: Tensor::new(vec![plan.dense_out, plan.dense_in], dense)?,
            dense_bias: Tensor::zeros(vec![plan.dense_out]),
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn conv_layers(&self) -> Vec<&ConvBn<T>> {
        let mut v: Vec<&ConvBn<T>> = self.stem.iter().collect();
        v.extend(self.blocks.iter().flat_map(|b| b.layers()));
        v.push(&self.head);
        v
    }

    pub fn conv_layers_mut(&mut self) -> Vec<&mut ConvBn<T>> {
        let mut v: Vec<&mut ConvBn<T>> = self.stem.iter_mut().collect();
        v.extend(self.blocks.iter_mut().flat_map(|b| b.layers_mut()));
        v.push(&mut self.head);
        v
    }

    /// Trainable tensors in a fixed order.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        for l in self.conv_layers() {
            v.push((format!("{}.weight", l.spec.name), &l.weight));
            v.push((format!("{}.gamma", l.spec.name), &l.gamma));
            v.push((format!("{}.beta", l.spec.name), &l.beta));
        }
        v.push(("dense.weight".into(), &self.dense_weight));
        v.push(("dense.bias".into(), &self.dense_bias));
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let (dw, db) = (&mut self.dense_weight, &mut self.dense_bias);
        let mut v = Vec::new();
        let mut layers: Vec<&mut ConvBn<T>> = self.stem.iter_mut().collect();
        layers.extend(self.blocks.iter_mut().flat_map(|b| b.layers_mut()));
        layers.push(&mut self.head);
        for l in layers {
            v.push(&mut l.weight);
            v.push(&mut l.gamma);
            v.push(&mut l.beta);
        }
        v.push(dw);
        v.push(db);
        v
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Parameters plus batch-norm running statistics, keyed by name.
    pub fn state(&self) -> BTreeMap<String, Tensor<T>> {
        let mut m: BTreeMap<String, Tensor<T>> =
            self.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect();
        for l in self.conv_layers() {
            m.insert(format!("{}.running_mean", l.spec.name), Tensor::from_vec(l.stats.mean.clone()));
            m.insert(format!("{}.running_var", l.spec.name), Tensor::from_vec(l.stats.var.clone()));
        }
        m
    }

    /// Rebuilds a network from [`PreOpNet::state`] output.
    pub fn from_state(config: &ArchitectureConfig, state: &BTreeMap<String, Tensor<T>>) -> Result<Self, ModelError> {
        let mut net = Self::zeroed(config)?;
        let fetch = |name: &str, shape: &[usize]| -> Result<Tensor<T>, ModelError> {
            let t = state.get(name).ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
            if t.shape() != shape {
                return Err(ModelError::FeatureMismatch(format!(
                    "tensor {name} has shape {:?}, configuration expects {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        for l in net.conv_layers_mut() {
            let n = &l.spec.name;
            l.weight = fetch(&format!("{n}.weight"), &l.spec.weight_shape())?;
            let ch = [l.spec.out_ch];
            l.gamma = fetch(&format!("{n}.gamma"), &ch)?;
            l.beta = fetch(&format!("{n}.beta"), &ch)?;
            l.stats.mean = fetch(&format!("{n}.running_mean"), &ch)?.into_data();
            l.stats.var = fetch(&format!("{n}.running_var"), &ch)?.into_data();
        }
        net.dense_weight = fetch("dense.weight", &net.dense_weight.shape().to_vec())?;
        net.dense_bias = fetch("dense.bias", &net.dense_bias.shape().to_vec())?;
        let expected = net.state().len();
        if state.len() != expected {
            let extra: Vec<&String> = state.keys().filter(|k| !net.state().contains_key(*k)).collect();
            return Err(ModelError::FeatureMismatch(format!("unexpected tensors {extra:?}")));
        }
        Ok(net)
    }

    pub fn cast<U: Scalar>(&self) -> PreOpNet<U> {
        PreOpNet {
            config: self.config.clone(),
            stem: self.stem.iter().map(ConvBn::cast).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    expand: b.expand.as_ref().map(ConvBn::cast),
                    depthwise: b.depthwise.cast(),
                    project: b.project.cast(),
                    residual: b.residual,
                })
                .collect(),
            head: self.head.cast(),
            dense_weight: self.dense_weight.cast(),
            dense_bias: self.dense_bias.cast(),
        }
    }

    /// Records the network on `tape`. `input` is `[batch, leads, len]` and
    /// `clinical` `[batch, width]`. Training mode updates running statistics.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        input: Var,
        clinical: Option<Var>,
        mode: BnMode,
    ) -> Result<ForwardVars, ModelError> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 3 || shape[1] != self.config.input_leads || shape[2] != self.config.input_len {
            return Err(ModelError::FeatureMismatch(format!(
                "input {shape:?}, expected [batch, {}, {}]",
                self.config.input_leads, self.config.input_len
            )));
        }
        let width = clinical.map_or(0, |c| tape.value(c).shape().get(1).copied().unwrap_or(0));
        if width != self.config.clinical_feature_width {
            return Err(ModelError::FeatureMismatch(format!(
                "{width} clinical features supplied, model expects {}",
                self.config.clinical_feature_width
            )));
        }
        let mut params = Vec::new();
        let mut h = input;
        for l in &mut self.stem {
            h = l.forward(tape, h, mode, &mut params)?;
        }
        for b in &mut self.blocks {
            let skip = h;
            for l in b.layers_mut() {
                h = l.forward(tape, h, mode, &mut params)?;
            }
            if b.residual {
                h = tape.add(h, skip)?;
            }
        }
        h = self.head.forward(tape, h, mode, &mut params)?;
        let w = tape.param(self.dense_weight.clone());
        let bias = tape.param(self.dense_bias.clone());
        params.extend([w, bias]);
        let logit = tape.pool_dense(h, w, bias, clinical)?;
        Ok(ForwardVars { prob: tape.sigmoid(logit), params })
    }

    /// Inference copy with batch norm folded into the convolutions.
    pub fn fuse(&self) -> InferenceNet {
        let eps = BnConfig::default().eps;
        let fuse = |l: &ConvBn<T>| {
            let per_out = l.weight.len() / l.spec.out_ch;
            let mut weight = Vec::with_capacity(l.weight.len());
            let mut bias = Vec::with_capacity(l.spec.out_ch);
            for c in 0..l.spec.out_ch {
                let scale = l.gamma.data()[c].as_f64() / (l.stats.var[c].as_f64() + eps).sqrt();
                weight.extend(l.weight.data()[c * per_out..(c + 1) * per_out].iter().map(|w| (w.as_f64() * scale) as f32));
                bias.push((l.beta.data()[c].as_f64() - l.stats.mean[c].as_f64() * scale) as f32);
            }
            FusedConv { spec: l.spec.clone(), weight, bias }
        };
        InferenceNet {
            config: self.config.clone(),
            stem: self.stem.iter().map(fuse).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| FusedBlock {
                    layers: b.layers().map(fuse).collect(),
                    residual: b.residual,
                })
                .collect(),
            head: fuse(&self.head),
            dense_weight: self.dense_weight.data().iter().map(|v| v.as_f64()).collect(),
            dense_bias: self.dense_bias.data()[0].as_f64(),
        }
    }
}

#[derive(Debug, Clone)]
struct FusedConv {
    spec: ConvLayerSpec,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl FusedConv {
    fn run(&self, x: &[f32]) -> Vec<f32> {
        let s = &self.spec;
        let g = ConvGeometry {
            batch: 1,
            in_ch: s.in_ch,
            len: s.in_len,
            out_ch: s.out_ch,
            kernel: s.kernel,
            out_len: s.out_len,
            spec: s.conv,
        };
        let mut y = conv1d_forward(x, &self.weight, Some(&self.bias), &g);
        if s.activation {
            for v in &mut y {
                *v = v.clamp(0.0, 6.0);
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
struct FusedBlock {
    layers: Vec<FusedConv>,
    residual: bool,
}

/// Single-example evaluation path in `f32` with folded batch norm.
#[derive(Debug, Clone)]
pub struct InferenceNet {
    config: ArchitectureConfig,
    stem: Vec<FusedConv>,
    blocks: Vec<FusedBlock>,
    head: FusedConv,
    dense_weight: Vec<f64>,
    dense_bias: f64,
}

impl InferenceNet {
    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn input_size(&self) -> usize {
        self.config.input_leads * self.config.input_len
    }

    /// Pre-sigmoid output for one lead-major example.
    pub fn logit(&self, input: &[f32], clinical: Option<&[f32]>) -> Result<f64, ModelError> {
        if input.len() != self.input_size() {
            return Err(ModelError::FeatureMismatch(format!(
                "input has {} samples, expected {}",
                input.len(),
                self.input_size()
            )));
        }
        let width = clinical.map_or(0, <[f32]>::len);
        if width != self.config.clinical_feature_width {
            return Err(ModelError::FeatureMismatch(format!(
                "{width} clinical features supplied, model expects {}",
                self.config.clinical_feature_width
            )));
        }
        let mut h = input.to_vec();
        for l in &self.stem {
            h = l.run(&h);
        }
        for b in &self.blocks {
            let mut y = b.layers[0].run(&h);
            for l in &b.layers[1..] {
                y = l.run(&y);
            }
            if b.residual {
                for (o, s) in y.iter_mut().zip(&h) {
                    *o += s;
                }
            }
            h = y;
        }
        let h = self.head.run(&h);
        let len = self.head.spec.out_len;
        let mut z = self.dense_bias;
        for (c, row) in h.chunks_exact(len).enumerate() {
            let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / len as f64;
            z += self.dense_weight[c] * mean;
        }
        let head = self.head.spec.out_ch;
        for (i, &f) in clinical.unwrap_or(&[]).iter().enumerate() {
            z += self.dense_weight[head + i] * f64::from(f);
        }
        Ok(z)
    }

    /// Probability clamped to `[1e-7, 1 − 1e-7]`.
    pub fn probability(&self, input: &[f32], clinical: Option<&[f32]>) -> Result<f64, ModelError> {
        let z = self.logit(input, clinical)?;
        Ok(stable_sigmoid(z).clamp(BCE_EPS, 1.0 - BCE_EPS))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient_check, Objective};
    use crate::model::arch::{StageConfig, StemConfig};
    use rand::Rng;

    fn small_config() -> ArchitectureConfig {
        ArchitectureConfig {
            input_leads: 3,
            input_len: 64,
            stem: StemConfig { out_channels: 4, kernel: 5, dilation: 2, stride: 2, layers: 2 },
            stages: vec![
                StageConfig { expansion_factor: 2, out_channels: 4, depthwise_kernel: 3, stride: 1, repeats: 2 },
                StageConfig { expansion_factor: 3, out_channels: 6, depthwise_kernel: 5, stride: 2, repeats: 1 },
            ],
            head_channels: 8,
            clinical_feature_width: 0,
        }
    }

    fn random_input(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn tape_probs(net: &mut PreOpNet<f64>, x: &[f64], batch: usize, clinical: Option<&[f64]>, mode: BnMode) -> Vec<f64> {
        let c = net.config().clone();
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![batch, c.input_leads, c.input_len], x.to_vec()).unwrap());
        let cv = clinical.map(|v| tape.constant(Tensor::new(vec![batch, v.len() / batch], v.to_vec()).unwrap()));
        let out = net.forward(&mut tape, xv, cv, mode).unwrap();
        tape.value(out.prob).data().to_vec()
    }

    #[test]
    fn zero_weights_give_one_half() {
        let c = ArchitectureConfig::canonical();
        let net = PreOpNet::<f32>::zeroed(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f32> = (0..c.input_leads * c.input_len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        assert_eq!(net.fuse().probability(&x, None).unwrap(), 0.5);
    }

    #[test]
    fn fused_path_matches_eval_tape() {
        let c = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = PreOpNet::<f64>::new(&c, 3).unwrap();
        for l in net.conv_layers_mut() {
            for (m, v) in l.stats.mean.iter_mut().zip(l.stats.var.iter_mut()) {
                *m = rng.gen_range(-0.3..0.3);
                *v = rng.gen_range(0.5..2.0);
            }
            for g in l.gamma.data_mut() {
                *g = rng.gen_range(0.5..1.5);
            }
        }
        let x = random_input(c.input_leads * c.input_len, &mut rng);
        let tape = tape_probs(&mut net, &x, 1, None, BnMode::Eval)[0];
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let fused = net.fuse().probability(&xf, None).unwrap();
        assert!((tape - fused).abs() < 1e-5, "{tape} vs {fused}");
    }

    #[test]
    fn residual_block_with_zeroed_branch_is_identity() {
        let c = small_config();
        let mut net = PreOpNet::<f64>::new(&c, 4).unwrap();
        assert!(net.blocks[1].residual);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_input(c.input_leads * c.input_len, &mut rng);
        let with_block = tape_probs(&mut net.clone(), &x, 1, None, BnMode::Eval)[0];
        // zero projection gamma and beta: the block adds nothing
        net.blocks[1].project.gamma = Tensor::zeros(vec![4]);
        net.blocks[1].project.beta = Tensor::zeros(vec![4]);
        let silenced = tape_probs(&mut net.clone(), &x, 1, None, BnMode::Eval)[0];
        let mut skipped = net.clone();
        skipped.blocks.remove(1);
        let without = tape_probs(&mut skipped, &x, 1, None, BnMode::Eval)[0];
        assert_eq!(silenced, without);
        assert_ne!(with_block, without);
    }

    #[test]
    fn clinical_features_change_output_only_when_fused() {
        let c = small_config().with_clinical(true);
        let mut net = PreOpNet::<f64>::new(&c, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_input(c.input_leads * c.input_len, &mut rng);
        let a = vec![0.7, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let b = vec![0.4, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let pa = tape_probs(&mut net, &x, 1, Some(&a), BnMode::Eval)[0];
        let pb = tape_probs(&mut net, &x, 1, Some(&b), BnMode::Eval)[0];
        assert_ne!(pa, pb);
        let clin = net.dense_weight.shape()[1] - 8;
        for w in &mut net.dense_weight.data_mut()[clin..] {
            *w = 0.0;
        }
        let pa = tape_probs(&mut net, &x, 1, Some(&a), BnMode::Eval)[0];
        let pb = tape_probs(&mut net, &x, 1, Some(&b), BnMode::Eval)[0];
        assert_eq!(pa, pb);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let c = small_config().with_clinical(true);
        let net = PreOpNet::<f32>::new(&c, 6).unwrap();
        let x = vec![0.0f32; c.input_leads * c.input_len];
        assert!(matches!(net.fuse().probability(&x, None), Err(ModelError::FeatureMismatch(_))));
        assert!(matches!(net.fuse().probability(&x, Some(&[0.0; 3])), Err(ModelError::FeatureMismatch(_))));
        assert!(matches!(net.fuse().probability(&x[1..], Some(&[0.0; 8])), Err(ModelError::FeatureMismatch(_))));
    }

    #[test]
    fn state_round_trips() {
        let c = small_config();
        let net = PreOpNet::<f32>::new(&c, 7).unwrap();
        let back = PreOpNet::from_state(&c, &net.state()).unwrap();
        assert_eq!(back.state(), net.state());
        let mut broken = net.state();
        broken.remove("head.gamma");
        assert!(matches!(PreOpNet::from_state(&c, &broken), Err(ModelError::MissingTensor(_))));
    }

    #[test]
    fn initialisation_is_seeded() {
        let c = small_config();
        let a = PreOpNet::<f32>::new(&c, 1).unwrap().state();
        assert_eq!(a, PreOpNet::<f32>::new(&c, 1).unwrap().state());
        assert_ne!(a, PreOpNet::<f32>::new(&c, 2).unwrap().state());
    }

    /// Whole-network loss as a function of every parameter tensor, f64,
    /// training-mode batch norm with a fixed minibatch.
    pub(crate) struct NetObjective {
        pub net: PreOpNet<f64>,
        pub input: Tensor<f64>,
        pub clinical: Option<Tensor<f64>>,
        pub labels: Vec<f64>,
    }

    impl NetObjective {
        fn run(&mut self, grads: bool) -> (f64, Vec<Vec<f64>>) {
            let mut net = self.net.clone();
            let mut tape = Tape::new();
            let x = tape.constant(self.input.clone());
            let c = self.clinical.clone().map(|t| tape.constant(t));
            let out = net.forward(&mut tape, x, c, BnMode::Train).unwrap();
            let loss = tape.bce(out.prob, &self.labels).unwrap();
            let value = tape.value(loss).data()[0];
            if !grads {
                return (value, Vec::new());
            }
            let mut g = tape.backward(loss).unwrap();
            (value, out.params.iter().map(|&v| g.take(v).into_data()).collect())
        }
    }

    impl Objective for NetObjective {
        fn layers(&self) -> Vec<(String, usize)> {
            self.net.named_params().into_iter().map(|(n, t)| (n, t.len())).collect()
        }
        fn get(&self, layer: usize, index: usize) -> f64 {
            self.net.named_params()[layer].1.data()[index]
        }
        fn set(&mut self, layer: usize, index: usize, value: f64) {
            self.net.params_mut()[layer].data_mut()[index] = value;
        }
        fn loss(&mut self) -> f64 {
            self.run(false).0
        }
        fn gradient(&mut self) -> Vec<Vec<f64>> {
            self.run(true).1
        }
    }

    #[test]
    fn small_network_gradients_match_finite_differences() {
        let c = small_config().with_clinical(true);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 2 * c.input_leads * c.input_len;
        let mut obj = NetObjective {
            net: PreOpNet::new(&c, 9).unwrap(),
            input: Tensor::new(vec![2, c.input_leads, c.input_len], random_input(n, &mut rng)).unwrap(),
            clinical: Some(Tensor::new(vec![2, 8], random_input(16, &mut rng)).unwrap()),
            labels: vec![1.0, 0.0],
        };
        let report = gradient_check(&mut obj, 25, 10);
        assert!(report.max_rel_error() < 1e-4, "{report:#?}");
    }
}
