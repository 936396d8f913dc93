//! Dense loops behind the network: im2col convolution, pooling, dense
//! layers and their adjoints. All tensors are CHW, row-major.

use super::{ConvGeometry, Real};

const LANES: usize = 8;

/// Dot product with independent partial sums so the loop vectorizes.
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (x, y)| s + *x * *y);
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let pairs = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

/// `dst += a * src`
#[inline]
pub(crate) fn axpy<T: Real>(dst: &mut [T], a: T, src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * *s;
    }
}

pub(crate) fn relu<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero the gradient wherever the post-ReLU activation is not positive.
pub(crate) fn relu_mask<T: Real>(grad: &mut [T], activ: &[T]) {
    for (g, a) in grad.iter_mut().zip(activ) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

pub(crate) fn pad<T: Real>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let (top, _, left, _) = g.pad;
    if g.pad == (0, 0, 0, 0) {
        return x.to_vec();
    }
    let (ph, pw) = g.padded();
    let (h, w) = (g.input.height, g.input.width);
    let mut out = vec![T::zero(); g.input.channels * ph * pw];
    for c in 0..g.input.channels {
        for y in 0..h {
            let src = &x[(c * h + y) * w..][..w];
            out[(c * ph + y + top) * pw + left..][..w].copy_from_slice(src);
        }
    }
    out
}

fn unpad<T: Real>(x: Vec<T>, g: &ConvGeometry) -> Vec<T> {
    let (top, _, left, _) = g.pad;
    if g.pad == (0, 0, 0, 0) {
        return x;
    }
    let (ph, pw) = g.padded();
    let (h, w) = (g.input.height, g.input.width);
    let mut out = vec![T::zero(); g.input.channels * h * w];
    for c in 0..g.input.channels {
        for y in 0..h {
            out[(c * h + y) * w..][..w].copy_from_slice(&x[(c * ph + y + top) * pw + left..][..w]);
        }
    }
    out
}

/// Patch matrix of shape `[in_ch * kh * kw][out_h * out_w]`.
pub(crate) fn im2col<T: Real>(padded: &[T], g: &ConvGeometry) -> Vec<T> {
    let (ph, pw) = g.padded();
    let (oh, ow) = (g.conv_out.height, g.conv_out.width);
    let positions = oh * ow;
    let mut cols = vec![T::zero(); g.patch_len() * positions];
    let mut k = 0;
    for c in 0..g.input.channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let dst = &mut cols[k * positions..][..positions];
                for y in 0..oh {
                    let src = &padded[(c * ph + y + ky) * pw + kx..][..ow];
                    dst[y * ow..][..ow].copy_from_slice(src);
                }
                k += 1;
            }
        }
    }
    cols
}

/// Scatter-add a patch-gradient matrix back onto the padded input grid.
fn col2im<T: Real>(dcols: &[T], g: &ConvGeometry) -> Vec<T> {
    let (ph, pw) = g.padded();
    let (oh, ow) = (g.conv_out.height, g.conv_out.width);
    let positions = oh * ow;
    let mut out = vec![T::zero(); g.input.channels * ph * pw];
    let mut k = 0;
    for c in 0..g.input.channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let src = &dcols[k * positions..][..positions];
                for y in 0..oh {
                    let dst = &mut out[(c * ph + y + ky) * pw + kx..][..ow];
                    for (d, s) in dst.iter_mut().zip(&src[y * ow..][..ow]) {
                        *d += *s;
                    }
                }
                k += 1;
            }
        }
    }
    out
}

/// `out[o][p] = bias[o] + sum_k weights[o][k] * cols[k][p]`
pub(crate) fn conv_gemm<T: Real>(cols: &[T], weights: &[T], bias: &[T], g: &ConvGeometry) -> Vec<T> {
    let patch = g.patch_len();
    let positions = g.conv_out.height * g.conv_out.width;
    let mut out = vec![T::zero(); g.conv_out.channels * positions];
    for (o, row) in out.chunks_exact_mut(positions).enumerate() {
        row.fill(bias[o]);
        let w = &weights[o * patch..][..patch];
        for (k, &wk) in w.iter().enumerate() {
            axpy(row, wk, &cols[k * positions..][..positions]);
        }
    }
    out
}

/// Accumulate weight and bias gradients of one conv block; returns the
/// gradient with respect to the block input when `want_input` is set.
pub(crate) fn conv_backward<T: Real>(
    cols: &[T],
    weights: &[T],
    dout: &[T],
    gw: &mut [T],
    gb: &mut [T],
    g: &ConvGeometry,
    want_input: bool,
) -> Vec<T> {
    let patch = g.patch_len();
    let positions = g.conv_out.height * g.conv_out.width;
    for (o, drow) in dout.chunks_exact(positions).enumerate() {
        gb[o] += drow.iter().copied().sum::<T>();
        let gw_row = &mut gw[o * patch..][..patch];
        for (k, gwk) in gw_row.iter_mut().enumerate() {
            *gwk += dot(drow, &cols[k * positions..][..positions]);
        }
    }
    if !want_input {
        return Vec::new();
    }
    let mut dcols = vec![T::zero(); patch * positions];
    for (o, drow) in dout.chunks_exact(positions).enumerate() {
        let w = &weights[o * patch..][..patch];
        for (k, &wk) in w.iter().enumerate() {
            axpy(&mut dcols[k * positions..][..positions], wk, drow);
        }
    }
    unpad(col2im(&dcols, g), g)
}

/// 2×2 stride-2 max pooling (floor); returns pooled values and the index of
/// each window's first maximum.
pub(crate) fn max_pool<T: Real>(x: &[T], g: &ConvGeometry) -> (Vec<T>, Vec<usize>) {
    let (h, w) = (g.conv_out.height, g.conv_out.width);
    let (oh, ow) = (g.output.height, g.output.width);
    let mut out = Vec::with_capacity(g.output.len());
    let mut idx = Vec::with_capacity(g.output.len());
    for c in 0..g.conv_out.channels {
        for y in 0..oh {
            for xo in 0..ow {
                let base = (c * h + 2 * y) * w + 2 * xo;
                let candidates = [base, base + 1, base + w, base + w + 1];
                let mut best = candidates[0];
                for &i in &candidates[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

pub(crate) fn max_pool_backward<T: Real>(dout: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (d, &i) in dout.iter().zip(argmax) {
        dx[i] += *d;
    }
    dx
}

/// `y = W x + b` with `W` stored `[out][in]`.
pub(crate) fn dense<T: Real>(x: &[T], weights: &[T], bias: &[T]) -> Vec<T> {
    weights
        .chunks_exact(x.len())
        .zip(bias)
        .map(|(row, &b)| b + dot(row, x))
        .collect()
}

pub(crate) fn dense_backward<T: Real>(
    x: &[T],
    weights: &[T],
    dy: &[T],
    gw: &mut [T],
    gb: &mut [T],
    want_input: bool,
) -> Vec<T> {
    let n = x.len();
    let mut dx = if want_input { vec![T::zero(); n] } else { Vec::new() };
    for (o, &d) in dy.iter().enumerate() {
        if d == T::zero() {
            continue;
        }
        gb[o] += d;
        axpy(&mut gw[o * n..][..n], d, x);
        if want_input {
            axpy(&mut dx, d, &weights[o * n..][..n]);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_sequential_sum() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 3.0 - i as f64).collect();
        let expected: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - expected).abs() < 1e-9);
        assert_eq!(dot::<f64>(&[], &[]), 0.0);
    }
}
