use super::kernels::{conv1d_backward, conv1d_forward, ConvGeometry, ConvSpec};
use super::{AutodiffError, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnConfig {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BnConfig {
    fn default() -> Self {
        Self { momentum: 0.1, eps: 1e-5 }
    }
}

/// Per-channel running mean and (unbiased) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }
}

pub(crate) const BCE_EPS: f64 = 1e-7;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, geometry: ConvGeometry },
    BatchNorm { x: Var, gamma: Var, beta: Var, mean: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Relu6 { x: Var },
    Sigmoid { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Sum { x: Var },
    PoolDense { x: Var, w: Var, b: Var, extra: Option<Var>, pooled: Vec<T> },
    Bce { p: Var, labels: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records one forward computation for a single backward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn mismatch(msg: String) -> AutodiffError {
    AutodiffError::ShapeMismatch(msg)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var, AutodiffError> {
        let geometry = ConvGeometry::resolve(self.shape(x), self.shape(w), spec)?;
        if let Some(b) = b {
            if self.shape(b) != [geometry.out_ch] {
                return Err(mismatch(format!("conv bias {:?} for {} channels", self.shape(b), geometry.out_ch)));
            }
        }
        let out = conv1d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geometry,
        );
        let value = Tensor::new(vec![geometry.batch, geometry.out_ch, geometry.out_len], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Conv { x, w, b, geometry }, &inputs))
    }

    /// Batch normalization over `[batch, ch, len]`. Training mode updates
    /// `stats` in place; evaluation mode reads them.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: BnMode,
        config: BnConfig,
    ) -> Result<Var, AutodiffError> {
        let &[batch, ch, len] = self.shape(x) else {
            return Err(mismatch(format!("batch norm expects [b, c, l], got {:?}", self.shape(x))));
        };
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [ch] {
                return Err(mismatch(format!("batch norm {name} {:?} for {ch} channels", self.shape(v))));
            }
        }
        if stats.mean.len() != ch || stats.var.len() != ch {
            return Err(mismatch(format!("running stats sized {} for {ch} channels", stats.mean.len())));
        }
        let n = batch * len;
        let eps = T::of(config.eps);
        let xs = self.value(x).data();
        let (mean, inv_std) = match mode {
            BnMode::Train => {
                if n <= 1 {
                    return Err(AutodiffError::DegenerateBatch);
                }
                let nt = T::of(n as f64);
                let momentum = T::of(config.momentum);
                let mut means = Vec::with_capacity(ch);
                let mut inv = Vec::with_capacity(ch);
                for c in 0..ch {
                    let rows = (0..batch).map(|b| &xs[(b * ch + c) * len..][..len]);
                    let mean = rows.clone().flatten().copied().sum::<T>() / nt;
                    let var = rows.flatten().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
                    stats.mean[c] = (T::one() - momentum) * stats.mean[c] + momentum * mean;
                    let unbiased = var * nt / T::of((n - 1) as f64);
                    stats.var[c] = (T::one() - momentum) * stats.var[c] + momentum * unbiased;
                    means.push(mean);
                    inv.push(T::one() / (var + eps).sqrt());
                }
                (means, inv)
            }
            BnMode::Eval => (stats.mean.clone(), stats.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect()),
        };
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![T::zero(); xs.len()];
        for b in 0..batch {
            for c in 0..ch {
                let scale = g[c] * inv_std[c];
                let shift = bt[c] - mean[c] * scale;
                let off = (b * ch + c) * len;
                for (o, &v) in out[off..off + len].iter_mut().zip(&xs[off..off + len]) {
                    *o = v * scale + shift;
                }
            }
        }
        let value = Tensor::new(vec![batch, ch, len], out)?;
        let op = Op::BatchNorm { x, gamma, beta, mean, inv_std, batch_stats: mode == BnMode::Train };
        Ok(self.push(value, op, &[x, gamma, beta]))
    }

    pub fn relu6(&mut self, x: Var) -> Var {
        let six = T::of(6.0);
        let value = self.value(x).map(|v| v.max(T::zero()).min(six));
        self.push(value, Op::Relu6 { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(stable_sigmoid);
        self.push(value, Op::Sigmoid { x }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| p + q).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| p * q).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().copied().sum());
        self.push(value, Op::Sum { x }, &[x])
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<(), AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    /// Global average pool over length, optional concatenation of `extra`
    /// features `[batch, f]`, then `y = W·[pool, extra] + b` with `W: [out, in]`.
    pub fn pool_dense(&mut self, x: Var, w: Var, b: Var, extra: Option<Var>) -> Result<Var, AutodiffError> {
        let &[batch, ch, len] = self.shape(x) else {
            return Err(mismatch(format!("pool_dense expects [b, c, l], got {:?}", self.shape(x))));
        };
        let f = match extra {
            Some(e) => match *self.shape(e) {
                [eb, f] if eb == batch => f,
                _ => return Err(mismatch(format!("extra features {:?} for batch {batch}", self.shape(e)))),
            },
            None => 0,
        };
        let &[out, din] = self.shape(w) else {
            return Err(mismatch(format!("dense weight must be [out, in], got {:?}", self.shape(w))));
        };
        if din != ch + f {
            return Err(mismatch(format!("dense expects {din} inputs, pooled {ch} + extra {f}")));
        }
        if self.shape(b) != [out] {
            return Err(mismatch(format!("dense bias {:?} for {out} outputs", self.shape(b))));
        }
        let pooled = pool_features(self.value(x).data(), extra.map(|e| self.value(e).data()), batch, ch, len, f);
        let mut y = vec![T::zero(); batch * out];
        for bi in 0..batch {
            y[bi * out..(bi + 1) * out].copy_from_slice(self.value(b).data());
        }
        super::kernels::gemm(batch, din, out, &pooled, (din, 1), self.value(w).data(), (1, din), T::one(), &mut y, (out, 1));
        let value = Tensor::new(vec![batch, out], y)?;
        let mut inputs = vec![x, w, b];
        inputs.extend(extra);
        Ok(self.push(value, Op::PoolDense { x, w, b, extra, pooled }, &inputs))
    }

    /// Mean binary cross-entropy with `p` clamped to `[1e-7, 1 − 1e-7]`.
    pub fn bce(&mut self, p: Var, labels: &[T]) -> Result<Var, AutodiffError> {
        let probs = self.value(p).data();
        if probs.len() != labels.len() {
            return Err(mismatch(format!("{} probabilities for {} labels", probs.len(), labels.len())));
        }
        if !self.value(p).all_finite() {
            return Err(AutodiffError::NonFinite);
        }
        let (lo, hi) = (T::of(BCE_EPS), T::one() - T::of(BCE_EPS));
        let total: T = probs
            .iter()
            .zip(labels)
            .map(|(&q, &y)| {
                let q = q.max(lo).min(hi);
                -(y * q.ln() + (T::one() - y) * (T::one() - q).ln())
            })
            .sum();
        let value = Tensor::scalar(total / T::of(labels.len().max(1) as f64));
        Ok(self.push(value, Op::Bce { p, labels: labels.to_vec() }, &[p]))
    }

    /// Consumes the tape and returns gradients of `loss` for every leaf
    /// that requires them. Leaves the loss does not reach get zeros.
    pub fn backward(mut self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        let loss_shape = self.shape(loss).to_vec();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NonScalarLoss(loss_shape));
        }
        let shapes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut leaf_grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let (done, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let done: &[Node<T>] = done;
            let needs = move |v: Var| done[v.0].requires_grad;
            let val = move |v: Var| done[v.0].value.data();
            match &node.op {
                Op::Leaf => leaf_grads[i] = Some(g),
                Op::Conv { x, w, b, geometry } => {
                    let cg = conv1d_backward(val(*x), val(*w), &g, geometry, needs(*x));
                    if let Some(gx) = cg.grad_x {
                        accumulate(&mut grads, *x, gx);
                    }
                    if needs(*w) {
                        accumulate(&mut grads, *w, cg.grad_w);
                    }
                    if let Some(b) = b.filter(|b| needs(*b)) {
                        accumulate(&mut grads, b, cg.grad_b);
                    }
                }
                Op::BatchNorm { x, gamma, beta, mean, inv_std, batch_stats } => {
                    let &[batch, ch, len] = shapes[x.0].as_slice() else { unreachable!() };
                    let xs = val(*x);
                    let gm = val(*gamma);
                    let nt = T::of((batch * len) as f64);
                    let mut g_gamma = vec![T::zero(); ch];
                    let mut g_beta = vec![T::zero(); ch];
                    for c in 0..ch {
                        for b in 0..batch {
                            let off = (b * ch + c) * len;
                            for (&gy, &xv) in g[off..off + len].iter().zip(&xs[off..off + len]) {
                                g_beta[c] += gy;
                                g_gamma[c] += gy * (xv - mean[c]) * inv_std[c];
                            }
                        }
                    }
                    if needs(*x) {
                        let mut gx = vec![T::zero(); xs.len()];
                        for c in 0..ch {
                            let k = gm[c] * inv_std[c];
                            for b in 0..batch {
                                let off = (b * ch + c) * len;
                                let it = gx[off..off + len].iter_mut().zip(&g[off..off + len]).zip(&xs[off..off + len]);
                                if *batch_stats {
                                    let (sg, sgx) = (g_beta[c] / nt, g_gamma[c] / nt);
                                    for ((d, &gy), &xv) in it {
                                        let xhat = (xv - mean[c]) * inv_std[c];
                                        *d = k * (gy - sg - xhat * sgx);
                                    }
                                } else {
                                    for ((d, &gy), _) in it {
                                        *d = k * gy;
                                    }
                                }
                            }
                        }
                        accumulate(&mut grads, *x, gx);
                    }
                    if needs(*gamma) {
                        accumulate(&mut grads, *gamma, g_gamma);
                    }
                    if needs(*beta) {
                        accumulate(&mut grads, *beta, g_beta);
                    }
                }
                Op::Relu6 { x } => {
                    let six = T::of(6.0);
                    let gx = g
                        .iter()
                        .zip(val(*x))
                        .map(|(&gy, &xv)| if xv > T::zero() && xv < six { gy } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid { x } => {
                    let gx = g.iter().zip(node.value.data()).map(|(&gy, &y)| gy * y * (T::one() - y)).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Add { a, b } => {
                    if needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Mul { a, b } => {
                    if needs(*a) {
                        accumulate(&mut grads, *a, g.iter().zip(val(*b)).map(|(&p, &q)| p * q).collect());
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, g.iter().zip(val(*a)).map(|(&p, &q)| p * q).collect());
                    }
                }
                Op::Sum { x } => {
                    let n = shapes[x.0].iter().product();
                    accumulate(&mut grads, *x, vec![g[0]; n]);
                }
                Op::PoolDense { x, w, b, extra, pooled } => {
                    let &[batch, ch, len] = shapes[x.0].as_slice() else { unreachable!() };
                    let &[out, din] = shapes[w.0].as_slice() else { unreachable!() };
                    if needs(*w) {
                        // dW = dYᵀ · features
                        let mut gw = vec![T::zero(); out * din];
                        super::kernels::gemm(out, batch, din, &g, (1, out), pooled, (din, 1), T::zero(), &mut gw, (din, 1));
                        accumulate(&mut grads, *w, gw);
                    }
                    if needs(*b) {
                        let mut gb = vec![T::zero(); out];
                        for row in g.chunks_exact(out) {
                            for (d, &v) in gb.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *b, gb);
                    }
                    let want_extra = extra.is_some_and(|e| needs(e));
                    if needs(*x) || want_extra {
                        // d features = dY · W
                        let mut gf = vec![T::zero(); batch * din];
                        super::kernels::gemm(batch, out, din, &g, (out, 1), val(*w), (din, 1), T::zero(), &mut gf, (din, 1));
                        if needs(*x) {
                            let inv_len = T::one() / T::of(len as f64);
                            let mut gx = vec![T::zero(); batch * ch * len];
                            for bi in 0..batch {
                                for c in 0..ch {
                                    gx[(bi * ch + c) * len..][..len].fill(gf[bi * din + c] * inv_len);
                                }
                            }
                            accumulate(&mut grads, *x, gx);
                        }
                        if let Some(e) = extra.filter(|_| want_extra) {
                            let f = din - ch;
                            let ge = (0..batch).flat_map(|bi| gf[bi * din + ch..bi * din + ch + f].to_vec()).collect();
                            accumulate(&mut grads, e, ge);
                        }
                    }
                }
                Op::Bce { p, labels } => {
                    let (lo, hi) = (T::of(BCE_EPS), T::one() - T::of(BCE_EPS));
                    let scale = g[0] / T::of(labels.len() as f64);
                    let gp = val(*p)
                        .iter()
                        .zip(labels)
                        .map(|(&q, &y)| {
                            if q < lo || q > hi {
                                T::zero()
                            } else {
                                scale * (-y / q + (T::one() - y) / (T::one() - q))
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *p, gp);
                }
            }
            // later nodes are done, so this activation is no longer needed
            if !matches!(node.op, Op::Leaf) {
                node.value = Tensor::zeros(vec![0]);
            }
        }
        Ok(Gradients { grads: leaf_grads, shapes })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, delta: Vec<T>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        slot => *slot = Some(delta),
    }
}

pub(crate) fn pool_features<T: Scalar>(
    x: &[T],
    extra: Option<&[T]>,
    batch: usize,
    ch: usize,
    len: usize,
    f: usize,
) -> Vec<T> {
    let din = ch + f;
    let inv_len = T::one() / T::of(len as f64);
    let mut feats = vec![T::zero(); batch * din];
    for b in 0..batch {
        for c in 0..ch {
            feats[b * din + c] = x[(b * ch + c) * len..][..len].iter().copied().sum::<T>() * inv_len;
        }
        if let Some(e) = extra {
            feats[b * din + ch..(b + 1) * din].copy_from_slice(&e[b * f..(b + 1) * f]);
        }
    }
    feats
}

/// `1/(1+e^−x)` for `x ≥ 0`, `e^x/(1+e^x)` otherwise.
pub fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `v`, zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient matches shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Moves the gradient out, avoiding a copy.
    pub fn take(&mut self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match self.grads[v.0].take() {
            Some(g) => Tensor::new(shape, g).expect("gradient matches shape"),
            None => Tensor::zeros(shape),
        }
    }
}
