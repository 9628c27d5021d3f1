//! Numeric kernels behind the tape primitives.
//!
//! Kernels are pure functions of their inputs. Batch loops may run on the
//! rayon pool; reductions over the batch always combine in index order, so
//! results are bit-identical regardless of thread count.

use rayon::prelude::*;

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Output spatial size of a convolution along one axis.
#[inline]
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Chunk size for deterministic batch reductions. Fixed (not thread-count
/// dependent) so the floating-point combine order never changes.
const REDUCE_CHUNK: usize = 8;

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

/// Expand one sample [Ci, H, W] into columns [Ci*kh*kw, Ho*Wo].
#[allow(clippy::too_many_arguments)]
fn im2col<F: Scalar>(
    x: &[F],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    col: &mut [F],
) {
    let ho = conv_out_len(h, kh, stride, pad);
    let wo = conv_out_len(w, kw, stride, pad);
    debug_assert_eq!(col.len(), ci * kh * kw * ho * wo);
    for c in 0..ci {
        let xc = &x[c * h * w..(c + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((c * kh + ki) * kw + kj) * ho * wo;
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    let out = &mut col[row + oh * wo..row + (oh + 1) * wo];
                    if ih < 0 || ih >= h as isize {
                        out.fill(F::zero());
                        continue;
                    }
                    let xrow = &xc[ih as usize * w..(ih as usize + 1) * w];
                    for (ow, slot) in out.iter_mut().enumerate() {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        *slot = if iw < 0 || iw >= w as isize {
                            F::zero()
                        } else {
                            xrow[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution family
// ---------------------------------------------------------------------------

/// y[B, Co, Ho, Wo] = conv2d(x[B, Ci, H, W], w[Co, Ci, kh, kw]) via
/// per-sample im2col and one GEMM.
pub fn conv2d<F: Scalar>(x: &Tensor<F>, weight: &Tensor<F>, stride: usize, pad: usize) -> Tensor<F> {
    let (b, ci, h, w) = dims4(x);
    let (co, wci, kh, kw) = dims4(weight);
    debug_assert_eq!(ci, wci);
    let ho = conv_out_len(h, kh, stride, pad);
    let wo = conv_out_len(w, kw, stride, pad);
    let k = ci * kh * kw;
    let mut y = vec![F::zero(); b * co * ho * wo];
    let xs = x.data();
    let ws = weight.data();
    y.par_chunks_mut(co * ho * wo).enumerate().for_each(|(bi, yb)| {
        let mut col = vec![F::zero(); k * ho * wo];
        im2col(&xs[bi * ci * h * w..(bi + 1) * ci * h * w], ci, h, w, kh, kw, stride, pad, &mut col);
        F::gemm(false, false, co, k, ho * wo, F::one(), ws, &col, F::zero(), yb);
    });
    Tensor::new(vec![b, co, ho, wo], y)
}

/// Gradient of conv2d with respect to its input.
///
/// dx[B, Ci, H, W] from g[B, Co, Ho, Wo] and w[Co, Ci, kh, kw]; this is the
/// adjoint of the linear map `x -> conv2d(x, w)`: one GEMM per sample
/// followed by a col2im scatter.
pub fn conv2d_input_grad<F: Scalar>(
    g: &Tensor<F>,
    weight: &Tensor<F>,
    stride: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
) -> Tensor<F> {
    let (b, co, ho, wo) = dims4(g);
    let (wco, ci, kh, kw) = dims4(weight);
    debug_assert_eq!(co, wco);
    let k = ci * kh * kw;
    let mut dx = vec![F::zero(); b * ci * in_h * in_w];
    let gs = g.data();
    let ws = weight.data();
    dx.par_chunks_mut(ci * in_h * in_w).enumerate().for_each(|(bi, dxb)| {
        let mut col = vec![F::zero(); k * ho * wo];
        // col = W^T (k x Co) * g_b (Co x HoWo)
        F::gemm(
            true,
            false,
            k,
            co,
            ho * wo,
            F::one(),
            ws,
            &gs[bi * co * ho * wo..(bi + 1) * co * ho * wo],
            F::zero(),
            &mut col,
        );
        col2im(&col, ci, in_h, in_w, kh, kw, stride, pad, dxb);
    });
    Tensor::new(vec![b, ci, in_h, in_w], dx)
}

/// Scatter-add columns [Ci*kh*kw, Ho*Wo] back onto one sample [Ci, H, W].
#[allow(clippy::too_many_arguments)]
fn col2im<F: Scalar>(
    col: &[F],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    x: &mut [F],
) {
    let ho = conv_out_len(h, kh, stride, pad);
    let wo = conv_out_len(w, kw, stride, pad);
    x.fill(F::zero());
    for c in 0..ci {
        let xc = &mut x[c * h * w..(c + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((c * kh + ki) * kw + kj) * ho * wo;
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let src = &col[row + oh * wo..row + (oh + 1) * wo];
                    let xrow = &mut xc[ih as usize * w..(ih as usize + 1) * w];
                    if stride == 1 && kj >= pad && w + kj - pad >= wo {
                        // fully in-bounds fast path
                        let off = kj - pad;
                        let hi = (w - off).min(wo);
                        for (ow, &v) in src[..hi].iter().enumerate() {
                            xrow[ow + off] = xrow[ow + off] + v;
                        }
                    } else {
                        for (ow, &v) in src.iter().enumerate() {
                            let iw = (ow * stride + kj) as isize - pad as isize;
                            if iw >= 0 && iw < w as isize {
                                xrow[iw as usize] = xrow[iw as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of conv2d with respect to its kernel.
///
/// dw[Co, Ci, kh, kw] from x[B, Ci, H, W] and g[B, Co, Ho, Wo]; batch
/// contributions are summed in index order.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_weight_grad<F: Scalar>(
    x: &Tensor<F>,
    g: &Tensor<F>,
    stride: usize,
    pad: usize,
    kh: usize,
    kw: usize,
) -> Tensor<F> {
    let (b, ci, h, w) = dims4(x);
    let (gb, co, ho, wo) = dims4(g);
    debug_assert_eq!(b, gb);
    let k = ci * kh * kw;
    let xs = x.data();
    let gs = g.data();
    // Per-chunk partials, combined sequentially for a fixed summation order.
    let chunks: Vec<Vec<F>> = (0..b)
        .collect::<Vec<_>>()
        .par_chunks(REDUCE_CHUNK)
        .map(|batch_ids| {
            let mut dw = vec![F::zero(); co * k];
            let mut col = vec![F::zero(); k * ho * wo];
            for &bi in batch_ids {
                im2col(&xs[bi * ci * h * w..(bi + 1) * ci * h * w], ci, h, w, kh, kw, stride, pad, &mut col);
                // dw += g_b (Co x HoWo) * col^T (HoWo x k)
                F::gemm(
                    false,
                    true,
                    co,
                    ho * wo,
                    k,
                    F::one(),
                    &gs[bi * co * ho * wo..(bi + 1) * co * ho * wo],
                    &col,
                    F::one(),
                    &mut dw,
                );
            }
            dw
        })
        .collect();
    let mut dw = vec![F::zero(); co * k];
    for part in &chunks {
        for (acc, &v) in dw.iter_mut().zip(part.iter()) {
            *acc = *acc + v;
        }
    }
    Tensor::new(vec![co, ci, kh, kw], dw)
}

// ---------------------------------------------------------------------------
// Dense products
// ---------------------------------------------------------------------------

/// c[M, N] = a[M, K] * b[K, N].
pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    let (m, k) = dims2(a);
    let (kb, n) = dims2(b);
    debug_assert_eq!(k, kb);
    let mut c = vec![F::zero(); m * n];
    F::gemm(false, false, m, k, n, F::one(), a.data(), b.data(), F::zero(), &mut c);
    Tensor::new(vec![m, n], c)
}

pub fn transpose2d<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    let (m, n) = dims2(a);
    let src = a.data();
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = src[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

// ---------------------------------------------------------------------------
// Bias / broadcast
// ---------------------------------------------------------------------------

/// Channel axis length for bias broadcasting: axis 1 of a 4-d tensor, the
/// last axis of a 2-d tensor.
pub fn bias_len(shape: &[usize]) -> usize {
    match shape.len() {
        4 => shape[1],
        2 => shape[1],
        _ => panic!("bias ops expect rank 2 or 4, got {shape:?}"),
    }
}

pub fn bias_add<F: Scalar>(x: &Tensor<F>, bias: &Tensor<F>) -> Tensor<F> {
    let mut out = x.clone();
    let bs = bias.data();
    match x.shape() {
        [b, c, h, w] => {
            let plane = h * w;
            let data = out.data_mut();
            for bi in 0..*b {
                for ci in 0..*c {
                    let beta = bs[ci];
                    let off = (bi * c + ci) * plane;
                    for v in &mut data[off..off + plane] {
                        *v = *v + beta;
                    }
                }
            }
        }
        [b, n] => {
            let data = out.data_mut();
            for bi in 0..*b {
                for (j, v) in data[bi * n..(bi + 1) * n].iter_mut().enumerate() {
                    *v = *v + bs[j];
                }
            }
        }
        other => panic!("bias_add expects rank 2 or 4, got {other:?}"),
    }
    out
}

/// Adjoint of `bias_add` with respect to the bias: sum over the broadcast axes.
pub fn sum_to_bias<F: Scalar>(g: &Tensor<F>) -> Tensor<F> {
    match g.shape() {
        [b, c, h, w] => {
            let plane = h * w;
            let mut out = vec![F::zero(); *c];
            let gs = g.data();
            for bi in 0..*b {
                for (ci, acc) in out.iter_mut().enumerate() {
                    let off = (bi * c + ci) * plane;
                    let mut s = F::zero();
                    for &v in &gs[off..off + plane] {
                        s = s + v;
                    }
                    *acc = *acc + s;
                }
            }
            Tensor::new(vec![*c], out)
        }
        [b, n] => {
            let mut out = vec![F::zero(); *n];
            let gs = g.data();
            for bi in 0..*b {
                for (j, acc) in out.iter_mut().enumerate() {
                    *acc = *acc + gs[bi * n + j];
                }
            }
            Tensor::new(vec![*n], out)
        }
        other => panic!("sum_to_bias expects rank 2 or 4, got {other:?}"),
    }
}

/// Broadcast a [C] vector across a rank-2 or rank-4 shape (adjoint pair of
/// `sum_to_bias`).
pub fn broadcast_bias<F: Scalar>(bias: &Tensor<F>, shape: &[usize]) -> Tensor<F> {
    bias_add(&Tensor::zeros(shape.to_vec()), bias)
}

// ---------------------------------------------------------------------------
// Reductions and their broadcast adjoints
// ---------------------------------------------------------------------------

pub fn sum_all<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut s = F::zero();
    for &v in x.data() {
        s = s + v;
    }
    Tensor::scalar(s)
}

pub fn mean_all<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let n = F::from_f64(x.numel() as f64);
    Tensor::scalar(sum_all(x).scalar_value() / n)
}

pub fn frobenius_sq<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut s = F::zero();
    for &v in x.data() {
        s = s + v * v;
    }
    Tensor::scalar(s)
}

/// Reduce all axes except the batch axis: [B, ...] -> [B].
pub fn sum_per_sample<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let b = x.shape()[0];
    let per = x.numel() / b;
    let xs = x.data();
    let mut out = vec![F::zero(); b];
    for (bi, acc) in out.iter_mut().enumerate() {
        let mut s = F::zero();
        for &v in &xs[bi * per..(bi + 1) * per] {
            s = s + v;
        }
        *acc = s;
    }
    Tensor::new(vec![b], out)
}

pub fn broadcast_scalar<F: Scalar>(s: &Tensor<F>, shape: &[usize]) -> Tensor<F> {
    Tensor::full(shape.to_vec(), s.scalar_value())
}

/// Expand [B] back over [B, ...] (adjoint pair of `sum_per_sample`).
pub fn broadcast_per_sample<F: Scalar>(v: &Tensor<F>, shape: &[usize]) -> Tensor<F> {
    let b = shape[0];
    debug_assert_eq!(v.numel(), b);
    let per: usize = shape.iter().skip(1).product();
    let mut out = vec![F::zero(); b * per];
    for bi in 0..b {
        out[bi * per..(bi + 1) * per].fill(v.data()[bi]);
    }
    Tensor::new(shape.to_vec(), out)
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

/// Zero-pad the two trailing spatial axes by `p` on every side.
pub fn pad2d<F: Scalar>(x: &Tensor<F>, p: usize) -> Tensor<F> {
    let (b, c, h, w) = dims4(x);
    let (nh, nw) = (h + 2 * p, w + 2 * p);
    let mut out = vec![F::zero(); b * c * nh * nw];
    let xs = x.data();
    for bc in 0..b * c {
        for i in 0..h {
            let src = &xs[bc * h * w + i * w..bc * h * w + (i + 1) * w];
            let dst = bc * nh * nw + (i + p) * nw + p;
            out[dst..dst + w].copy_from_slice(src);
        }
    }
    Tensor::new(vec![b, c, nh, nw], out)
}

/// Remove a `p`-wide border from the two trailing spatial axes.
pub fn crop2d<F: Scalar>(x: &Tensor<F>, p: usize) -> Tensor<F> {
    let (b, c, h, w) = dims4(x);
    assert!(h > 2 * p && w > 2 * p, "crop2d: border {p} too large for {h}x{w}");
    let (nh, nw) = (h - 2 * p, w - 2 * p);
    let mut out = vec![F::zero(); b * c * nh * nw];
    let xs = x.data();
    for bc in 0..b * c {
        for i in 0..nh {
            let src = bc * h * w + (i + p) * w + p;
            let dst = bc * nh * nw + i * nw;
            out[dst..dst + nw].copy_from_slice(&xs[src..src + nw]);
        }
    }
    Tensor::new(vec![b, c, nh, nw], out)
}

/// Tile the channel axis `k` times: [B, C, H, W] -> [B, k*C, H, W].
pub fn repeat_channels<F: Scalar>(x: &Tensor<F>, k: usize) -> Tensor<F> {
    let (b, c, h, w) = dims4(x);
    let plane = c * h * w;
    let mut out = vec![F::zero(); b * k * plane];
    let xs = x.data();
    for bi in 0..b {
        let src = &xs[bi * plane..(bi + 1) * plane];
        for r in 0..k {
            let dst = (bi * k + r) * plane;
            out[dst..dst + plane].copy_from_slice(src);
        }
    }
    Tensor::new(vec![b, k * c, h, w], out)
}

/// Sum the `k` channel tiles back: adjoint pair of `repeat_channels`.
pub fn fold_channels<F: Scalar>(g: &Tensor<F>, k: usize) -> Tensor<F> {
    let (b, kc, h, w) = dims4(g);
    debug_assert_eq!(kc % k, 0);
    let c = kc / k;
    let plane = c * h * w;
    let gs = g.data();
    let mut out = vec![F::zero(); b * plane];
    for bi in 0..b {
        let dst = &mut out[bi * plane..(bi + 1) * plane];
        for r in 0..k {
            let src = &gs[(bi * k + r) * plane..(bi * k + r + 1) * plane];
            for (acc, &v) in dst.iter_mut().zip(src.iter()) {
                *acc = *acc + v;
            }
        }
    }
    Tensor::new(vec![b, c, h, w], out)
}

// ---------------------------------------------------------------------------
// Shape helpers
// ---------------------------------------------------------------------------

#[inline]
pub fn dims4<F: Scalar>(t: &Tensor<F>) -> (usize, usize, usize, usize) {
    match *t.shape() {
        [a, b, c, d] => (a, b, c, d),
        ref s => panic!("expected rank-4 tensor, got {s:?}"),
    }
}

#[inline]
pub fn dims2<F: Scalar>(t: &Tensor<F>) -> (usize, usize) {
    match *t.shape() {
        [a, b] => (a, b),
        ref s => panic!("expected rank-2 tensor, got {s:?}"),
    }
}
