//! Raw 1D convolution kernels over `[batch, channels, length]` buffers.
//!
//! General convolutions lower to im2col + GEMM; 1×1 stride-1 convolutions
//! multiply the input directly; depthwise convolutions (one input and one
//! output channel per group) use direct loops.

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub padding: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self { stride: 1, dilation: 1, groups: 1, padding: 0 }
    }
}

impl ConvSpec {
    pub fn new(stride: usize, dilation: usize, groups: usize, padding: usize) -> Self {
        Self { stride, dilation, groups, padding }
    }

    /// `floor((len + 2p − d(k−1) − 1) / s) + 1`, or `None` when that is below one.
    pub fn out_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        let span = self.dilation * (kernel.checked_sub(1)?) + 1;
        if self.stride == 0 || padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

/// Resolved sizes of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub len: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub out_len: usize,
    pub spec: ConvSpec,
}

impl ConvGeometry {
    pub fn resolve(x_shape: &[usize], w_shape: &[usize], spec: ConvSpec) -> Result<Self, AutodiffError> {
        let (&[batch, in_ch, len], &[out_ch, in_per_group, kernel]) = (x_shape, w_shape) else {
            return Err(AutodiffError::ShapeMismatch(format!(
                "conv1d expects input [b, c, l] and weight [o, c/g, k], got {x_shape:?} and {w_shape:?}"
            )));
        };
        if spec.groups == 0 || spec.stride == 0 || spec.dilation == 0 || kernel == 0 {
            return Err(AutodiffError::InvalidArgument(format!("degenerate convolution {spec:?}, k={kernel}")));
        }
        if in_ch % spec.groups != 0 || out_ch % spec.groups != 0 || in_ch / spec.groups != in_per_group {
            return Err(AutodiffError::ShapeMismatch(format!(
                "{in_ch} input and {out_ch} output channels incompatible with {} groups and weight {w_shape:?}",
                spec.groups
            )));
        }
        let out_len = spec.out_len(len, kernel).ok_or(AutodiffError::EmptyOutput)?;
        Ok(Self { batch, in_ch, len, out_ch, kernel, out_len, spec })
    }

    fn in_per_group(&self) -> usize {
        self.in_ch / self.spec.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_ch / self.spec.groups
    }

    fn is_depthwise(&self) -> bool {
        self.in_per_group() == 1 && self.out_per_group() == 1
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.spec.stride == 1 && self.spec.padding == 0
    }

    /// Output index range `[lo, hi)` whose tap `j` reads inside the input.
    fn valid_range(&self, j: usize) -> (usize, usize) {
        let ConvSpec { stride, dilation, padding, .. } = self.spec;
        let shift = j * dilation;
        // o·s + shift − p ∈ [0, len)
        let lo = if shift >= padding { 0 } else { (padding - shift).div_ceil(stride) };
        let hi_num = self.len as isize - 1 + padding as isize - shift as isize;
        let hi = if hi_num < 0 { 0 } else { (hi_num as usize / stride + 1).min(self.out_len) };
        (lo.min(hi), hi)
    }
}

/// `C = beta·C + A·B`, with `(row_stride, col_stride)` views of each operand.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_strides: (usize, usize),
    b: &[T],
    b_strides: (usize, usize),
    beta: T,
    c: &mut [T],
    c_strides: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let reach = |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs;
    assert!(k == 0 || reach(m, k, a_strides) < a.len(), "gemm: A view out of bounds");
    assert!(k == 0 || reach(k, n, b_strides) < b.len(), "gemm: B view out of bounds");
    assert!(reach(m, n, c_strides) < c.len(), "gemm: C view out of bounds");
    // SAFETY: bounds checked above; `c` is a unique borrow so it cannot alias.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let ConvSpec { stride, dilation, padding, .. } = g.spec;
    let ol = g.out_len;
    for c in 0..g.in_per_group() {
        let xc = &x[c * g.len..(c + 1) * g.len];
        for j in 0..g.kernel {
            let row = &mut cols[(c * g.kernel + j) * ol..][..ol];
            let (lo, hi) = g.valid_range(j);
            row[..lo].fill(T::zero());
            row[hi..].fill(T::zero());
            if lo < hi {
                let start = lo * stride + j * dilation - padding;
                if stride == 1 {
                    row[lo..hi].copy_from_slice(&xc[start..start + (hi - lo)]);
                } else {
                    for (dst, src) in row[lo..hi].iter_mut().zip(xc[start..].iter().step_by(stride)) {
                        *dst = *src;
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeometry, gx: &mut [T]) {
    let ConvSpec { stride, dilation, padding, .. } = g.spec;
    let ol = g.out_len;
    for c in 0..g.in_per_group() {
        let gxc = &mut gx[c * g.len..(c + 1) * g.len];
        for j in 0..g.kernel {
            let row = &cols[(c * g.kernel + j) * ol..][..ol];
            let (lo, hi) = g.valid_range(j);
            if lo < hi {
                let start = lo * stride + j * dilation - padding;
                for (src, dst) in row[lo..hi].iter().zip(gxc[start..].iter_mut().step_by(stride)) {
                    *dst += *src;
                }
            }
        }
    }
}

/// Forward convolution; returns `[batch, out_ch, out_len]`.
pub fn conv1d_forward<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeometry) -> Vec<T> {
    let mut out = vec![T::zero(); g.batch * g.out_ch * g.out_len];
    conv1d_forward_into(x, w, bias, g, &mut out);
    out
}

pub fn conv1d_forward_into<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeometry, out: &mut [T]) {
    let ol = g.out_len;
    if g.is_depthwise() {
        return depthwise_forward(x, w, bias, g, out);
    }
    let (cin_g, cout_g) = (g.in_per_group(), g.out_per_group());
    let kk = cin_g * g.kernel;
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * ol] };
    for b in 0..g.batch {
        for grp in 0..g.spec.groups {
            let xg = &x[(b * g.in_ch + grp * cin_g) * g.len..][..cin_g * g.len];
            let og = &mut out[(b * g.out_ch + grp * cout_g) * ol..][..cout_g * ol];
            let beta = match bias {
                Some(bias) => {
                    for (o, row) in og.chunks_exact_mut(ol).enumerate() {
                        row.fill(bias[grp * cout_g + o]);
                    }
                    T::one()
                }
                None => T::zero(),
            };
            let wg = &w[grp * cout_g * kk..][..cout_g * kk];
            let rhs: &[T] = if g.is_pointwise() {
                xg
            } else {
                im2col(xg, g, &mut cols);
                &cols
            };
            gemm(cout_g, kk, ol, wg, (kk, 1), rhs, (ol, 1), beta, og, (ol, 1));
        }
    }
}

fn depthwise_forward<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeometry, out: &mut [T]) {
    let ConvSpec { stride, dilation, padding, .. } = g.spec;
    let ol = g.out_len;
    for b in 0..g.batch {
        for c in 0..g.in_ch {
            let xc = &x[(b * g.in_ch + c) * g.len..][..g.len];
            let oc = &mut out[(b * g.out_ch + c) * ol..][..ol];
            oc.fill(bias.map_or(T::zero(), |bias| bias[c]));
            for j in 0..g.kernel {
                let wj = w[c * g.kernel + j];
                let (lo, hi) = g.valid_range(j);
                if lo >= hi {
                    continue;
                }
                let start = lo * stride + j * dilation - padding;
                if stride == 1 {
                    for (o, &xv) in oc[lo..hi].iter_mut().zip(&xc[start..start + (hi - lo)]) {
                        *o += wj * xv;
                    }
                } else {
                    for (o, &xv) in oc[lo..hi].iter_mut().zip(xc[start..].iter().step_by(stride)) {
                        *o += wj * xv;
                    }
                }
            }
        }
    }
}

/// Gradients of one convolution. `grad_x` is computed only when requested.
pub struct ConvGrads<T> {
    pub grad_x: Option<Vec<T>>,
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
}

pub fn conv1d_backward<T: Scalar>(x: &[T], w: &[T], gout: &[T], g: &ConvGeometry, need_x: bool) -> ConvGrads<T> {
    let ol = g.out_len;
    let mut grad_b = vec![T::zero(); g.out_ch];
    for b in 0..g.batch {
        for (o, gb) in grad_b.iter_mut().enumerate() {
            *gb += gout[(b * g.out_ch + o) * ol..][..ol].iter().copied().sum::<T>();
        }
    }
    let mut grad_w = vec![T::zero(); w.len()];
    let mut grad_x = need_x.then(|| vec![T::zero(); x.len()]);
    if g.is_depthwise() {
        depthwise_backward(x, w, gout, g, &mut grad_w, grad_x.as_deref_mut());
        return ConvGrads { grad_x, grad_w, grad_b };
    }

    let (cin_g, cout_g) = (g.in_per_group(), g.out_per_group());
    let kk = cin_g * g.kernel;
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); kk * ol] };
    let mut gcols = if pointwise || !need_x { Vec::new() } else { vec![T::zero(); kk * ol] };
    for b in 0..g.batch {
        for grp in 0..g.spec.groups {
            let xg = &x[(b * g.in_ch + grp * cin_g) * g.len..][..cin_g * g.len];
            let gog = &gout[(b * g.out_ch + grp * cout_g) * ol..][..cout_g * ol];
            let wg = &w[grp * cout_g * kk..][..cout_g * kk];
            let rhs: &[T] = if pointwise {
                xg
            } else {
                im2col(xg, g, &mut cols);
                &cols
            };
            // dW_g += dY_g · colsᵀ
            let gwg = &mut grad_w[grp * cout_g * kk..][..cout_g * kk];
            gemm(cout_g, ol, kk, gog, (ol, 1), rhs, (1, ol), T::one(), gwg, (kk, 1));
            if let Some(gx) = grad_x.as_mut() {
                let gxg = &mut gx[(b * g.in_ch + grp * cin_g) * g.len..][..cin_g * g.len];
                // dcols = W_gᵀ · dY_g
                if pointwise {
                    gemm(kk, cout_g, ol, wg, (1, kk), gog, (ol, 1), T::one(), gxg, (ol, 1));
                } else {
                    gemm(kk, cout_g, ol, wg, (1, kk), gog, (ol, 1), T::zero(), &mut gcols, (ol, 1));
                    col2im_add(&gcols, g, gxg);
                }
            }
        }
    }
    ConvGrads { grad_x, grad_w, grad_b }
}

fn depthwise_backward<T: Scalar>(x: &[T], w: &[T], gout: &[T], g: &ConvGeometry, gw: &mut [T], mut gx: Option<&mut [T]>) {
    let ConvSpec { stride, dilation, padding, .. } = g.spec;
    let ol = g.out_len;
    for b in 0..g.batch {
        for c in 0..g.in_ch {
            let xc = &x[(b * g.in_ch + c) * g.len..][..g.len];
            let goc = &gout[(b * g.out_ch + c) * ol..][..ol];
            for j in 0..g.kernel {
                let (lo, hi) = g.valid_range(j);
                if lo >= hi {
                    continue;
                }
                let start = lo * stride + j * dilation - padding;
                let mut acc = T::zero();
                for (&go, &xv) in goc[lo..hi].iter().zip(xc[start..].iter().step_by(stride)) {
                    acc += go * xv;
                }
                gw[c * g.kernel + j] += acc;
                if let Some(gx) = gx.as_deref_mut() {
                    let wj = w[c * g.kernel + j];
                    let gxc = &mut gx[(b * g.in_ch + c) * g.len..][..g.len];
                    for (&go, dst) in goc[lo..hi].iter().zip(gxc[start..].iter_mut().step_by(stride)) {
                        *dst += wj * go;
                    }
                }
            }
        }
    }
}
