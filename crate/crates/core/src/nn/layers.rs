//! Per-layer kernels over batched, row-major buffers.

use super::Scalar;

/// `out[n, o, y, x] = b[o] + sum_{c, ky, kx} w[o, c, ky, kx] * in[n, c, y + ky - 1, x + kx - 1]`.
pub(super) fn conv_forward<T: Scalar>(
    input: &[T],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
) -> Vec<T> {
    let plane = h * w;
    let mut out = vec![T::zero(); batch * cout * plane];
    for n in 0..batch {
        let x = &input[n * cin * plane..(n + 1) * cin * plane];
        for o in 0..cout {
            let y = &mut out[(n * cout + o) * plane..(n * cout + o + 1) * plane];
            y.fill(bias[o]);
            for c in 0..cin {
                let xc = &x[c * plane..(c + 1) * plane];
                let k = &weight[(o * cin + c) * 9..(o * cin + c + 1) * 9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = k[ky * 3 + kx];
                        conv_accumulate(y, xc, h, w, ky, kx, wv);
                    }
                }
            }
        }
    }
    out
}

/// `dst[r, col] += wv * src[r + ky - 1, col + kx - 1]` over the valid region.
#[inline]
fn conv_accumulate<T: Scalar>(dst: &mut [T], src: &[T], h: usize, w: usize, ky: usize, kx: usize, wv: T) {
    let (r0, r1) = valid_range(h, ky);
    let (c0, c1) = valid_range(w, kx);
    for r in r0..r1 {
        let sr = r + ky - 1;
        let d = &mut dst[r * w + c0..r * w + c1];
        let s = &src[sr * w + c0 + kx - 1..sr * w + c1 + kx - 1];
        for (a, &b) in d.iter_mut().zip(s) {
            *a += wv * b;
        }
    }
}

/// Output indices `i` with `i + k - 1` inside `[0, n)`.
#[inline]
fn valid_range(n: usize, k: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { n.saturating_sub(1) } else { n };
    (lo.min(hi), hi)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub(super) fn conv_backward<T: Scalar>(
    input: &[T],
    grad_out: &[T],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let plane = h * w;
    let mut gin = vec![T::zero(); batch * cin * plane];
    let mut gw = vec![T::zero(); weight.len()];
    let mut gb = vec![T::zero(); cout];
    for n in 0..batch {
        let x = &input[n * cin * plane..(n + 1) * cin * plane];
        let gx = &mut gin[n * cin * plane..(n + 1) * cin * plane];
        for o in 0..cout {
            let g = &grad_out[(n * cout + o) * plane..(n * cout + o + 1) * plane];
            gb[o] += g.iter().copied().sum::<T>();
            for c in 0..cin {
                let xc = &x[c * plane..(c + 1) * plane];
                let gxc = &mut gx[c * plane..(c + 1) * plane];
                let base = (o * cin + c) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (r0, r1) = valid_range(h, ky);
                        let (c0, c1) = valid_range(w, kx);
                        let wv = weight[base + ky * 3 + kx];
                        let mut acc = T::zero();
                        for r in r0..r1 {
                            let sr = r + ky - 1;
                            let gr = &g[r * w + c0..r * w + c1];
                            let off = sr * w + c0 + kx - 1;
                            let xs = &xc[off..off + (c1 - c0)];
                            for (&a, &b) in gr.iter().zip(xs) {
                                acc += a * b;
                            }
                            let gs = &mut gxc[off..off + (c1 - c0)];
                            for (d, &a) in gs.iter_mut().zip(gr) {
                                *d += wv * a;
                            }
                        }
                        gw[base + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    (gin, gw, gb)
}

/// 2x2/stride-2 max pooling. Returns the output and, per output cell, the flat input index of
/// the maximum (first occurrence wins).
pub(super) fn pool_forward<T: Scalar>(
    input: &[T],
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(batch * c * oh * ow);
    let mut idx = Vec::with_capacity(batch * c * oh * ow);
    for plane in 0..batch * c {
        let base = plane * h * w;
        for r in 0..oh {
            for col in 0..ow {
                let mut best = base + 2 * r * w + 2 * col;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * r + dr) * w + 2 * col + dc;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

pub(super) fn pool_backward<T: Scalar>(grad_out: &[T], idx: &[u32], in_len: usize) -> Vec<T> {
    let mut g = vec![T::zero(); in_len];
    for (&gv, &i) in grad_out.iter().zip(idx) {
        g[i as usize] += gv;
    }
    g
}

/// `[N, C, T, F] -> [N, C, F]`.
pub(super) fn time_mean_forward<T: Scalar>(input: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let scale = T::one() / T::of(h as f64);
    let mut out = vec![T::zero(); planes * w];
    for p in 0..planes {
        let o = &mut out[p * w..(p + 1) * w];
        for r in 0..h {
            let row = &input[(p * h + r) * w..(p * h + r + 1) * w];
            for (a, &b) in o.iter_mut().zip(row) {
                *a += b;
            }
        }
        for a in o.iter_mut() {
            *a *= scale;
        }
    }
    out
}

pub(super) fn time_mean_backward<T: Scalar>(grad_out: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let scale = T::one() / T::of(h as f64);
    let mut g = Vec::with_capacity(planes * h * w);
    for p in 0..planes {
        let go = &grad_out[p * w..(p + 1) * w];
        for _ in 0..h {
            g.extend(go.iter().map(|&v| v * scale));
        }
    }
    g
}

/// `y[n] = W x[n] + b`, `W` is `[out, in]`.
pub(super) fn linear_forward<T: Scalar>(
    input: &[T],
    batch: usize,
    din: usize,
    weight: &[T],
    bias: &[T],
    dout: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); batch * dout];
    // weight row outer so each row is streamed once per batch
    for o in 0..dout {
        let row = &weight[o * din..(o + 1) * din];
        for n in 0..batch {
            let x = &input[n * din..(n + 1) * din];
            out[n * dout + o] = bias[o] + dot(row, x);
        }
    }
    out
}

pub(super) fn linear_backward<T: Scalar>(
    input: &[T],
    grad_out: &[T],
    batch: usize,
    din: usize,
    weight: &[T],
    dout: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut gin = vec![T::zero(); batch * din];
    let mut gw = vec![T::zero(); weight.len()];
    let mut gb = vec![T::zero(); dout];
    for o in 0..dout {
        let row = &weight[o * din..(o + 1) * din];
        let grow = &mut gw[o * din..(o + 1) * din];
        for n in 0..batch {
            let g = grad_out[n * dout + o];
            if g == T::zero() {
                continue;
            }
            gb[o] += g;
            let x = &input[n * din..(n + 1) * din];
            for (a, &b) in grow.iter_mut().zip(x) {
                *a += g * b;
            }
            let gx = &mut gin[n * din..(n + 1) * din];
            for (a, &b) in gx.iter_mut().zip(row) {
                *a += g * b;
            }
        }
    }
    (gin, gw, gb)
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // four partial sums so the compiler can vectorize without reassociation licence
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}
