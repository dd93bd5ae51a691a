//! Network building blocks: same-padded convolution, ReLU, 2x2 max pool,
//! nearest-neighbor upsampling and channel concatenation, each with its
//! backward pass.
//!
//! Parallel sections split work over disjoint output planes and keep every
//! per-element reduction sequential, so results are bitwise identical at
//! any thread count.

use rayon::prelude::*;

use super::tensor::Tensor4;

/// Shape of one convolution layer.
#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
}

impl ConvDims {
    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.k * self.k
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.out_ch
    }
}

/// Valid output-row/col range for a kernel offset under same padding:
/// positions `o` with `o + koff - pad` inside [0, size).
#[inline]
fn valid_range(size: usize, koff: usize, pad: usize) -> Option<(usize, usize)> {
    let lo = (pad as i64 - koff as i64).max(0);
    let hi = (size as i64 - 1 + pad as i64 - koff as i64).min(size as i64 - 1);
    if hi < lo {
        None
    } else {
        Some((lo as usize, hi as usize))
    }
}

/// Stride-1 same-padding convolution.
pub fn conv2d_forward(x: &Tensor4, weights: &[f64], bias: &[f64], d: ConvDims) -> Tensor4 {
    debug_assert_eq!(x.c, d.in_ch);
    debug_assert_eq!(weights.len(), d.weight_len());
    let (h, w) = (x.h, x.w);
    let pad = d.k / 2;
    let mut out = Tensor4::zeros(x.n, d.out_ch, h, w);
    let hw = h * w;
    out.data
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(pi, out_plane)| {
            let ni = pi / d.out_ch;
            let oc = pi % d.out_ch;
            out_plane.fill(bias[oc]);
            for ic in 0..d.in_ch {
                let in_plane = x.plane(ni, ic);
                let wbase = (oc * d.in_ch + ic) * d.k * d.k;
                for ky in 0..d.k {
                    let Some((y0, y1)) = valid_range(h, ky, pad) else {
                        continue;
                    };
                    for kx in 0..d.k {
                        let Some((x0, x1)) = valid_range(w, kx, pad) else {
                            continue;
                        };
                        let wv = weights[wbase + ky * d.k + kx];
                        let len = x1 - x0 + 1;
                        for y in y0..=y1 {
                            let iy = y + ky - pad;
                            let ix0 = x0 + kx - pad;
                            let src = &in_plane[iy * w + ix0..iy * w + ix0 + len];
                            let dst = &mut out_plane[y * w + x0..y * w + x0 + len];
                            for i in 0..len {
                                dst[i] += wv * src[i];
                            }
                        }
                    }
                }
            }
        });
    out
}

/// Gradient wrt the convolution input.
pub fn conv2d_backward_input(
    grad_out: &Tensor4,
    weights: &[f64],
    d: ConvDims,
) -> Tensor4 {
    let (h, w) = (grad_out.h, grad_out.w);
    let pad = d.k / 2;
    let mut grad_in = Tensor4::zeros(grad_out.n, d.in_ch, h, w);
    let hw = h * w;
    grad_in
        .data
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(pi, gin_plane)| {
            let ni = pi / d.in_ch;
            let ic = pi % d.in_ch;
            for oc in 0..d.out_ch {
                let gout_plane = grad_out.plane(ni, oc);
                let wbase = (oc * d.in_ch + ic) * d.k * d.k;
                for ky in 0..d.k {
                    let Some((y0, y1)) = valid_range(h, ky, pad) else {
                        continue;
                    };
                    for kx in 0..d.k {
                        let Some((x0, x1)) = valid_range(w, kx, pad) else {
                            continue;
                        };
                        let wv = weights[wbase + ky * d.k + kx];
                        let len = x1 - x0 + 1;
                        for y in y0..=y1 {
                            let iy = y + ky - pad;
                            let ix0 = x0 + kx - pad;
                            let src = &gout_plane[y * w + x0..y * w + x0 + len];
                            let dst = &mut gin_plane[iy * w + ix0..iy * w + ix0 + len];
                            for i in 0..len {
                                dst[i] += wv * src[i];
                            }
                        }
                    }
                }
            }
        });
    grad_in
}

/// Gradients wrt weights and biases, written into the given slices.
pub fn conv2d_backward_params(
    x: &Tensor4,
    grad_out: &Tensor4,
    d: ConvDims,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    debug_assert_eq!(grad_w.len(), d.weight_len());
    debug_assert_eq!(grad_b.len(), d.out_ch);
    let (h, w) = (x.h, x.w);
    let pad = d.k / 2;
    let per_oc = d.in_ch * d.k * d.k;
    grad_w
        .par_chunks_mut(per_oc)
        .zip(grad_b.par_iter_mut())
        .enumerate()
        .for_each(|(oc, (gw, gb))| {
            for ni in 0..x.n {
                let gout_plane = grad_out.plane(ni, oc);
                *gb += gout_plane.iter().sum::<f64>();
                for ic in 0..d.in_ch {
                    let in_plane = x.plane(ni, ic);
                    for ky in 0..d.k {
                        let Some((y0, y1)) = valid_range(h, ky, pad) else {
                            continue;
                        };
                        for kx in 0..d.k {
                            let Some((x0, x1)) = valid_range(w, kx, pad) else {
                                continue;
                            };
                            let len = x1 - x0 + 1;
                            let mut acc = 0.0;
                            for y in y0..=y1 {
                                let iy = y + ky - pad;
                                let ix0 = x0 + kx - pad;
                                let a = &gout_plane[y * w + x0..y * w + x0 + len];
                                let b = &in_plane[iy * w + ix0..iy * w + ix0 + len];
                                for i in 0..len {
                                    acc += a[i] * b[i];
                                }
                            }
                            gw[ic * d.k * d.k + ky * d.k + kx] += acc;
                        }
                    }
                }
            }
        });
}

pub fn relu_inplace(t: &mut Tensor4) {
    for v in &mut t.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Mask the gradient with the stored post-activation output. Zero output
/// (pre-activation <= 0) kills the gradient.
pub fn relu_backward_inplace(grad: &mut Tensor4, post: &Tensor4) {
    debug_assert_eq!(grad.data.len(), post.data.len());
    for (g, &o) in grad.data.iter_mut().zip(&post.data) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2x2 max pooling with stride 2; records flat argmax indices per plane.
pub fn maxpool2_forward(x: &Tensor4) -> (Tensor4, Vec<usize>) {
    assert!(x.h % 2 == 0 && x.w % 2 == 0, "pooling needs even dims");
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Tensor4::zeros(x.n, x.c, oh, ow);
    let mut argmax = vec![0usize; x.n * x.c * oh * ow];
    for ni in 0..x.n {
        for ci in 0..x.c {
            let inp = x.plane(ni, ci);
            let base = (ni * x.c + ci) * oh * ow;
            let outp = out.plane_mut(ni, ci);
            for y in 0..oh {
                for xx in 0..ow {
                    let i00 = 2 * y * x.w + 2 * xx;
                    let candidates = [i00, i00 + 1, i00 + x.w, i00 + x.w + 1];
                    let mut best = candidates[0];
                    for &cand in &candidates[1..] {
                        if inp[cand] > inp[best] {
                            best = cand;
                        }
                    }
                    outp[y * ow + xx] = inp[best];
                    argmax[base + y * ow + xx] = best;
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2_backward(grad_out: &Tensor4, argmax: &[usize]) -> Tensor4 {
    let (h, w) = (grad_out.h * 2, grad_out.w * 2);
    let mut grad_in = Tensor4::zeros(grad_out.n, grad_out.c, h, w);
    let ohw = grad_out.h * grad_out.w;
    for ni in 0..grad_out.n {
        for ci in 0..grad_out.c {
            let gout = grad_out.plane(ni, ci);
            let base = (ni * grad_out.c + ci) * ohw;
            let gin = grad_in.plane_mut(ni, ci);
            for i in 0..ohw {
                gin[argmax[base + i]] += gout[i];
            }
        }
    }
    grad_in
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2_forward(x: &Tensor4) -> Tensor4 {
    let (oh, ow) = (x.h * 2, x.w * 2);
    let mut out = Tensor4::zeros(x.n, x.c, oh, ow);
    for ni in 0..x.n {
        for ci in 0..x.c {
            let inp = x.plane(ni, ci);
            let outp = out.plane_mut(ni, ci);
            for y in 0..oh {
                let iy = y / 2;
                for xx in 0..ow {
                    outp[y * ow + xx] = inp[iy * x.w + xx / 2];
                }
            }
        }
    }
    out
}

pub fn upsample2_backward(grad_out: &Tensor4) -> Tensor4 {
    let (h, w) = (grad_out.h / 2, grad_out.w / 2);
    let mut grad_in = Tensor4::zeros(grad_out.n, grad_out.c, h, w);
    for ni in 0..grad_out.n {
        for ci in 0..grad_out.c {
            let gout = grad_out.plane(ni, ci);
            let gin = grad_in.plane_mut(ni, ci);
            for y in 0..h {
                for xx in 0..w {
                    let o = 2 * y * grad_out.w + 2 * xx;
                    gin[y * w + xx] =
                        gout[o] + gout[o + 1] + gout[o + grad_out.w] + gout[o + grad_out.w + 1];
                }
            }
        }
    }
    grad_in
}

/// Concatenate along the channel axis.
pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Tensor4 {
    assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w));
    let mut out = Tensor4::zeros(a.n, a.c + b.c, a.h, a.w);
    for ni in 0..a.n {
        for ci in 0..a.c {
            out.plane_mut(ni, ci).copy_from_slice(a.plane(ni, ci));
        }
        for ci in 0..b.c {
            out.plane_mut(ni, a.c + ci).copy_from_slice(b.plane(ni, ci));
        }
    }
    out
}

/// Split a gradient back into the two concatenated halves.
pub fn split_channels(g: &Tensor4, c_first: usize) -> (Tensor4, Tensor4) {
    let c_second = g.c - c_first;
    let mut a = Tensor4::zeros(g.n, c_first, g.h, g.w);
    let mut b = Tensor4::zeros(g.n, c_second, g.h, g.w);
    for ni in 0..g.n {
        for ci in 0..c_first {
            a.plane_mut(ni, ci).copy_from_slice(g.plane(ni, ci));
        }
        for ci in 0..c_second {
            b.plane_mut(ni, ci).copy_from_slice(g.plane(ni, c_first + ci));
        }
    }
    (a, b)
}

/// Mean-squared error and its gradient wrt the prediction.
pub fn mse_and_grad(pred: &Tensor4, target: &Tensor4) -> (f64, Tensor4) {
    debug_assert_eq!(pred.data.len(), target.data.len());
    let n = pred.data.len() as f64;
    let mut grad = Tensor4::zeros(pred.n, pred.c, pred.h, pred.w);
    let mut sse = 0.0;
    for i in 0..pred.data.len() {
        let d = pred.data[i] - target.data[i];
        sse += d * d;
        grad.data[i] = 2.0 * d / n;
    }
    (sse / n, grad)
}

/// Per-batch-item sum of squared errors, in item order.
pub fn per_sample_sse(pred: &Tensor4, target: &Tensor4) -> Vec<f64> {
    let chw = pred.c * pred.h * pred.w;
    (0..pred.n)
        .map(|ni| {
            let a = &pred.data[ni * chw..(ni + 1) * chw];
            let b = &target.data[ni * chw..(ni + 1) * chw];
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        })
        .collect()
}
