//! Dense 3D convolution, transposed convolution, batch normalization and
//! fully-connected kernels with their reverse-mode counterparts.
//!
//! Volumes are stored channel-major, then z, y, x with x fastest.

#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;

/// Spatial extent of a volume.
pub(crate) type Size3 = [usize; 3];

pub(crate) fn volume(s: Size3) -> usize {
    s[0] * s[1] * s[2]
}

/// Geometry of one (transposed) convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Input extent of the forward convolution (output of the transposed one).
    pub big: Size3,
    /// Output extent of the forward convolution (input of the transposed one).
    pub small: Size3,
}

impl ConvShape {
    pub fn kernel_volume(&self) -> usize {
        self.kernel * self.kernel * self.kernel
    }
}

/// Visits every (small index, big index, kernel index) triple that a
/// stride-`s` valid convolution connects.
#[inline(always)]
fn for_each_tap(sh: &ConvShape, mut f: impl FnMut(usize, usize, usize)) {
    let [bx, by, _] = sh.big;
    let [sx, sy, sz] = sh.small;
    let k = sh.kernel;
    let s = sh.stride;
    let mut ki = 0;
    for kz in 0..k {
        for ky in 0..k {
            for kx in 0..k {
                for oz in 0..sz {
                    for oy in 0..sy {
                        let small_row = (oz * sy + oy) * sx;
                        let big_row = ((oz * s + kz) * by + (oy * s + ky)) * bx + kx;
                        for ox in 0..sx {
                            f(small_row + ox, big_row + ox * s, ki);
                        }
                    }
                }
                ki += 1;
            }
        }
    }
}

/// Valid convolution: `out[co] = b[co] + Σ w[co][ci] ⋆ input[ci]`.
/// Weight layout `[c_out][c_in][k³]`.
pub(crate) fn conv_forward(sh: &ConvShape, input: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let (bv, sv, kv) = (volume(sh.big), volume(sh.small), sh.kernel_volume());
    for co in 0..sh.c_out {
        let o = &mut out[co * sv..(co + 1) * sv];
        o.fill(b[co]);
        for ci in 0..sh.c_in {
            let x = &input[ci * bv..(ci + 1) * bv];
            let wk = &w[(co * sh.c_in + ci) * kv..(co * sh.c_in + ci + 1) * kv];
            for_each_tap(sh, |si, bi, ki| o[si] += wk[ki] * x[bi]);
        }
    }
}

/// Accumulates weight, bias and (optionally) input gradients of
/// [`conv_forward`].
pub(crate) fn conv_backward(
    sh: &ConvShape,
    input: &[f64],
    w: &[f64],
    d_out: &[f64],
    d_w: &mut [f64],
    d_b: &mut [f64],
    mut d_in: Option<&mut [f64]>,
) {
    let (bv, sv, kv) = (volume(sh.big), volume(sh.small), sh.kernel_volume());
    for co in 0..sh.c_out {
        let g = &d_out[co * sv..(co + 1) * sv];
        d_b[co] += g.iter().sum::<f64>();
        for ci in 0..sh.c_in {
            let x = &input[ci * bv..(ci + 1) * bv];
            let base = (co * sh.c_in + ci) * kv;
            let dwk = &mut d_w[base..base + kv];
            for_each_tap(sh, |si, bi, ki| dwk[ki] += g[si] * x[bi]);
            if let Some(dx) = d_in.as_deref_mut() {
                let wk = &w[base..base + kv];
                let dx = &mut dx[ci * bv..(ci + 1) * bv];
                for_each_tap(sh, |si, bi, ki| dx[bi] += g[si] * wk[ki]);
            }
        }
    }
}

/// Transposed convolution from `small` to `big`. Weight layout
/// `[c_in][c_out][k³]` where `c_in` counts channels of the small side.
/// Big-side positions no tap reaches (output padding) receive only the bias.
pub(crate) fn deconv_forward(sh: &ConvShape, input: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let (bv, sv, kv) = (volume(sh.big), volume(sh.small), sh.kernel_volume());
    for co in 0..sh.c_out {
        out[co * bv..(co + 1) * bv].fill(b[co]);
    }
    for ci in 0..sh.c_in {
        let x = &input[ci * sv..(ci + 1) * sv];
        for co in 0..sh.c_out {
            let wk = &w[(ci * sh.c_out + co) * kv..(ci * sh.c_out + co + 1) * kv];
            let o = &mut out[co * bv..(co + 1) * bv];
            for_each_tap(sh, |si, bi, ki| o[bi] += wk[ki] * x[si]);
        }
    }
}

pub(crate) fn deconv_backward(
    sh: &ConvShape,
    input: &[f64],
    w: &[f64],
    d_out: &[f64],
    d_w: &mut [f64],
    d_b: &mut [f64],
    mut d_in: Option<&mut [f64]>,
) {
    let (bv, sv, kv) = (volume(sh.big), volume(sh.small), sh.kernel_volume());
    for co in 0..sh.c_out {
        d_b[co] += d_out[co * bv..(co + 1) * bv].iter().sum::<f64>();
    }
    for ci in 0..sh.c_in {
        let x = &input[ci * sv..(ci + 1) * sv];
        for co in 0..sh.c_out {
            let base = (ci * sh.c_out + co) * kv;
            let g = &d_out[co * bv..(co + 1) * bv];
            let dwk = &mut d_w[base..base + kv];
            for_each_tap(sh, |si, bi, ki| dwk[ki] += g[bi] * x[si]);
            if let Some(dx) = d_in.as_deref_mut() {
                let wk = &w[base..base + kv];
                let dx = &mut dx[ci * sv..(ci + 1) * sv];
                for_each_tap(sh, |si, bi, ki| dx[si] += g[bi] * wk[ki]);
            }
        }
    }
}

/// `out = W·x + b`, `W` row-major `[n_out][n_in]`.
pub(crate) fn dense_forward(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n_in).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

pub(crate) fn dense_backward(
    w: &[f64],
    x: &[f64],
    d_out: &[f64],
    d_w: &mut [f64],
    d_b: &mut [f64],
    d_in: Option<&mut [f64]>,
) {
    let n_in = x.len();
    for (o, &g) in d_out.iter().enumerate() {
        d_b[o] += g;
        let row = &mut d_w[o * n_in..(o + 1) * n_in];
        for (dw, &xi) in row.iter_mut().zip(x) {
            *dw += g * xi;
        }
    }
    if let Some(dx) = d_in {
        for (o, &g) in d_out.iter().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            for (d, &wi) in dx.iter_mut().zip(row) {
                *d += g * wi;
            }
        }
    }
}

pub(crate) fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries whose rectifier input was not positive.
pub(crate) fn relu_backward(pre: &[f64], grad: &mut [f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-channel statistics used by one batch-normalization call.
#[derive(Debug, Clone)]
pub(crate) struct BnStats {
    pub mean: alloc::vec::Vec<f64>,
    pub inv_std: alloc::vec::Vec<f64>,
    /// Biased batch variance (for running-statistic updates).
    pub var: alloc::vec::Vec<f64>,
    pub count: usize,
}

/// Batch statistics over `samples` (each `[c][spatial]`), per channel.
pub(crate) fn bn_batch_stats(samples: &[&[f64]], channels: usize, spatial: usize, eps: f64) -> BnStats {
    let count = samples.len() * spatial;
    let mut mean = alloc::vec![0.0; channels];
    let mut var = alloc::vec![0.0; channels];
    for c in 0..channels {
        let mut s = 0.0;
        for x in samples {
            s += x[c * spatial..(c + 1) * spatial].iter().sum::<f64>();
        }
        let m = s / count as f64;
        let mut q = 0.0;
        for x in samples {
            q += x[c * spatial..(c + 1) * spatial].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
        mean[c] = m;
        var[c] = q / count as f64;
    }
    let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    BnStats { mean, inv_std, var, count }
}

/// `out = γ·(x − mean)·inv_std + β`; returns nothing, writes normalized
/// values into `xhat` when given.
pub(crate) fn bn_apply(
    x: &[f64],
    channels: usize,
    spatial: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    beta: &[f64],
    out: &mut [f64],
    mut xhat: Option<&mut [f64]>,
) {
    for c in 0..channels {
        for i in c * spatial..(c + 1) * spatial {
            let h = (x[i] - mean[c]) * inv_std[c];
            if let Some(xh) = xhat.as_deref_mut() {
                xh[i] = h;
            }
            out[i] = gamma[c] * h + beta[c];
        }
    }
}

/// Training-mode batch-norm backward for a whole batch.
///
/// `xhat[b]` and `d_out[b]` are per-sample `[c][spatial]`; writes `d_in[b]`.
pub(crate) fn bn_backward(
    xhat: &[&[f64]],
    d_out: &[&[f64]],
    channels: usize,
    spatial: usize,
    stats: &BnStats,
    gamma: &[f64],
    d_gamma: &mut [f64],
    d_beta: &mut [f64],
    d_in: &mut [&mut [f64]],
) {
    let n = stats.count as f64;
    for c in 0..channels {
        let r = c * spatial..(c + 1) * spatial;
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for (xh, g) in xhat.iter().zip(d_out) {
            for (a, b) in xh[r.clone()].iter().zip(&g[r.clone()]) {
                sum_g += b;
                sum_gx += b * a;
            }
        }
        d_gamma[c] += sum_gx;
        d_beta[c] += sum_g;
        let k = gamma[c] * stats.inv_std[c];
        let (mg, mgx) = (sum_g / n, sum_gx / n);
        for ((xh, g), dx) in xhat.iter().zip(d_out).zip(d_in.iter_mut()) {
            for i in r.clone() {
                dx[i] = k * (g[i] - mg - xh[i] * mgx);
            }
        }
    }
}
