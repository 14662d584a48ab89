//! Batched numeric kernels behind the graph ops. Sequences are laid out as
//! `n × channels × length`, feature rows as `n × features`, all row-major.
//! Per-sample work runs through [`crate::par`]; parameter-gradient sums use
//! its fixed-order chunked reduction.

use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub len_out: usize,
}

impl ConvGeom {
    /// Output positions `to` for which `to*stride + j - pad_left` lands inside the input.
    fn valid(&self, j: usize) -> (usize, usize) {
        let lo = if j >= self.pad_left {
            0
        } else {
            (self.pad_left - j).div_ceil(self.stride)
        };
        let lim = self.len + self.pad_left;
        let hi = if lim <= j {
            0
        } else {
            (lim - j).div_ceil(self.stride).min(self.len_out)
        };
        (lo, hi.max(lo))
    }

    fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k
    }
}

pub fn conv1d_forward(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut y = vec![0.0; g.n * g.c_out * g.len_out];
    let in_block = g.c_in * g.len;
    par::for_each_chunk_mut(&mut y, g.c_out * g.len_out, |s, ys| {
        let xs = &x[s * in_block..(s + 1) * in_block];
        for co in 0..g.c_out {
            let yrow = &mut ys[co * g.len_out..(co + 1) * g.len_out];
            yrow.fill(b[co]);
            for ci in 0..g.c_in {
                let xrow = &xs[ci * g.len..(ci + 1) * g.len];
                for j in 0..g.k {
                    let wv = w[(co * g.c_in + ci) * g.k + j];
                    let (lo, hi) = g.valid(j);
                    if g.stride == 1 {
                        let off = lo + j - g.pad_left;
                        for (yo, xv) in yrow[lo..hi].iter_mut().zip(&xrow[off..off + hi - lo]) {
                            *yo += wv * xv;
                        }
                    } else {
                        for (to, yo) in yrow.iter_mut().enumerate().take(hi).skip(lo) {
                            *yo += wv * xrow[to * g.stride + j - g.pad_left];
                        }
                    }
                }
            }
        }
    });
    y
}

/// Returns `(d_weight ++ d_bias, d_input)`; `d_input` is empty unless requested.
pub fn conv1d_backward(x: &[f64], w: &[f64], dy: &[f64], g: &ConvGeom, want_dx: bool) -> (Vec<f64>, Vec<f64>) {
    let wl = g.weight_len();
    let in_block = g.c_in * g.len;
    let out_block = g.c_out * g.len_out;
    par::chunked_sum_and_concat(g.n, wl + g.c_out, |start, end| {
        let mut dwb = vec![0.0; wl + g.c_out];
        let mut dx = if want_dx {
            vec![0.0; (end - start) * in_block]
        } else {
            Vec::new()
        };
        for s in start..end {
            let xs = &x[s * in_block..(s + 1) * in_block];
            let dys = &dy[s * out_block..(s + 1) * out_block];
            for co in 0..g.c_out {
                let dyrow = &dys[co * g.len_out..(co + 1) * g.len_out];
                dwb[wl + co] += dyrow.iter().sum::<f64>();
                for ci in 0..g.c_in {
                    let xrow = &xs[ci * g.len..(ci + 1) * g.len];
                    for j in 0..g.k {
                        let widx = (co * g.c_in + ci) * g.k + j;
                        let (lo, hi) = g.valid(j);
                        let mut acc = 0.0;
                        if g.stride == 1 {
                            let off = lo + j - g.pad_left;
                            for (d, xv) in dyrow[lo..hi].iter().zip(&xrow[off..off + hi - lo]) {
                                acc += d * xv;
                            }
                            if want_dx {
                                let wv = w[widx];
                                let base = (s - start) * in_block + ci * g.len + off;
                                for (dxv, d) in dx[base..base + hi - lo].iter_mut().zip(&dyrow[lo..hi]) {
                                    *dxv += wv * d;
                                }
                            }
                        } else {
                            for (to, &d) in dyrow.iter().enumerate().take(hi).skip(lo) {
                                let ti = to * g.stride + j - g.pad_left;
                                acc += d * xrow[ti];
                                if want_dx {
                                    dx[(s - start) * in_block + ci * g.len + ti] += w[widx] * d;
                                }
                            }
                        }
                        dwb[widx] += acc;
                    }
                }
            }
        }
        (dwb, dx)
    })
}

/// Max over windows; returns values and the flat input index of each maximum
/// (first index wins ties).
pub fn max_pool_forward(
    x: &[f64],
    n: usize,
    c: usize,
    len: usize,
    pool: usize,
    stride: usize,
) -> (Vec<f64>, Vec<usize>) {
    let len_out = (len - pool) / stride + 1;
    let mut y = vec![0.0; n * c * len_out];
    let mut arg = vec![0usize; n * c * len_out];
    for row in 0..n * c {
        let xr = &x[row * len..(row + 1) * len];
        for to in 0..len_out {
            let start = to * stride;
            let mut best = start;
            for t in start + 1..start + pool {
                if xr[t] > xr[best] {
                    best = t;
                }
            }
            y[row * len_out + to] = xr[best];
            arg[row * len_out + to] = row * len + best;
        }
    }
    (y, arg)
}

pub fn dense_forward(x: &[f64], w: &[f64], b: &[f64], n: usize, f: usize, u: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * u];
    par::for_each_chunk_mut(&mut y, u, |s, yr| {
        yr.copy_from_slice(b);
        let xr = &x[s * f..(s + 1) * f];
        for (fi, &xv) in xr.iter().enumerate() {
            if xv != 0.0 {
                for (yo, wv) in yr.iter_mut().zip(&w[fi * u..(fi + 1) * u]) {
                    *yo += xv * wv;
                }
            }
        }
    });
    y
}

/// Returns `(d_weight ++ d_bias, d_input)`.
pub fn dense_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    n: usize,
    f: usize,
    u: usize,
    want_dx: bool,
) -> (Vec<f64>, Vec<f64>) {
    par::chunked_sum_and_concat(n, f * u + u, |start, end| {
        let mut dwb = vec![0.0; f * u + u];
        let mut dx = if want_dx {
            vec![0.0; (end - start) * f]
        } else {
            Vec::new()
        };
        for s in start..end {
            let xr = &x[s * f..(s + 1) * f];
            let dyr = &dy[s * u..(s + 1) * u];
            for (db, d) in dwb[f * u..].iter_mut().zip(dyr) {
                *db += d;
            }
            for fi in 0..f {
                let wr = &w[fi * u..(fi + 1) * u];
                let xv = xr[fi];
                let dwr = &mut dwb[fi * u..(fi + 1) * u];
                let mut acc = 0.0;
                for ((dw, d), wv) in dwr.iter_mut().zip(dyr).zip(wr) {
                    *dw += xv * d;
                    acc += wv * d;
                }
                if want_dx {
                    dx[(s - start) * f + fi] = acc;
                }
            }
        }
        (dwb, dx)
    })
}

/// Per-channel batch-norm statistics over `(batch, time)`: `(mean, biased var)`.
pub fn channel_moments(x: &[f64], n: usize, c: usize, len: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (n * len) as f64;
    let stats = par::map(c, |ch| {
        let rows = || (0..n).map(|s| &x[(s * c + ch) * len..(s * c + ch + 1) * len]);
        let mean = rows().map(|r| r.iter().sum::<f64>()).sum::<f64>() / count;
        let var = rows()
            .map(|r| r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
            .sum::<f64>()
            / count;
        (mean, var)
    });
    stats.into_iter().unzip()
}

/// Applies `y = gamma * (x - mean) * inv_std + beta`; returns `(y, xhat)`.
#[allow(clippy::too_many_arguments)]
pub fn normalize_channels(
    x: &[f64],
    c: usize,
    len: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; x.len()];
    par::for_each_chunk_mut(&mut xhat, c * len, |s, block| {
        for ch in 0..c {
            let xr = &x[(s * c + ch) * len..(s * c + ch + 1) * len];
            for (o, v) in block[ch * len..(ch + 1) * len].iter_mut().zip(xr) {
                *o = (v - mean[ch]) * inv_std[ch];
            }
        }
    });
    let mut y = xhat.clone();
    for (i, v) in y.iter_mut().enumerate() {
        let ch = (i / len) % c;
        *v = gamma[ch] * *v + beta[ch];
    }
    (y, xhat)
}

/// Per-channel `(sum dy, sum dy * xhat)`.
pub fn channel_grad_sums(dy: &[f64], xhat: &[f64], n: usize, c: usize, len: usize) -> (Vec<f64>, Vec<f64>) {
    let sums = par::map(c, |ch| {
        let mut sd = 0.0;
        let mut sdx = 0.0;
        for s in 0..n {
            let base = (s * c + ch) * len;
            for t in base..base + len {
                sd += dy[t];
                sdx += dy[t] * xhat[t];
            }
        }
        (sd, sdx)
    });
    sums.into_iter().unzip()
}
