//! LSTM layer over the time axis: gates ordered input, forget, candidate,
//! output in the stacked `4H` weight rows; zero initial state; the layer
//! output is the last hidden state. Backward is full BPTT.

use super::sigmoid_scalar;
use crate::par;

#[derive(Debug, Clone, Copy)]
pub struct LstmGeom {
    pub n: usize,
    pub c: usize,
    pub len: usize,
    pub hidden: usize,
}

impl LstmGeom {
    pub fn param_lens(&self) -> (usize, usize, usize) {
        let g = 4 * self.hidden;
        (g * self.c, g * self.hidden, g)
    }
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    /// `len × 4H` post-activation gates.
    gates: Vec<f64>,
    /// `(len + 1) × H`, entry 0 is the zero initial cell state.
    cells: Vec<f64>,
    /// `(len + 1) × H`, entry 0 is the zero initial hidden state.
    hidden: Vec<f64>,
}

fn input_at(xs: &[f64], g: &LstmGeom, t: usize, out: &mut [f64]) {
    for (ch, o) in out.iter_mut().enumerate() {
        *o = xs[ch * g.len + t];
    }
}

pub fn lstm_forward(x: &[f64], w_ih: &[f64], w_hh: &[f64], b: &[f64], g: &LstmGeom) -> (Vec<f64>, Vec<LstmTrace>) {
    let h = g.hidden;
    let traces = par::map(g.n, |s| {
        let xs = &x[s * g.c * g.len..(s + 1) * g.c * g.len];
        let mut gates = vec![0.0; g.len * 4 * h];
        let mut cells = vec![0.0; (g.len + 1) * h];
        let mut hidden = vec![0.0; (g.len + 1) * h];
        let mut xt = vec![0.0; g.c];
        for t in 0..g.len {
            input_at(xs, g, t, &mut xt);
            let z = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            z.copy_from_slice(b);
            let h_prev = &hidden[t * h..(t + 1) * h];
            for (r, zr) in z.iter_mut().enumerate() {
                let wi = &w_ih[r * g.c..(r + 1) * g.c];
                let wh = &w_hh[r * h..(r + 1) * h];
                *zr += wi.iter().zip(&xt).map(|(a, b)| a * b).sum::<f64>()
                    + wh.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
            }
            for k in 0..h {
                z[k] = sigmoid_scalar(z[k]);
                z[h + k] = sigmoid_scalar(z[h + k]);
                z[2 * h + k] = z[2 * h + k].tanh();
                z[3 * h + k] = sigmoid_scalar(z[3 * h + k]);
            }
            for k in 0..h {
                let c = z[h + k] * cells[t * h + k] + z[k] * z[2 * h + k];
                cells[(t + 1) * h + k] = c;
                hidden[(t + 1) * h + k] = z[3 * h + k] * c.tanh();
            }
        }
        LstmTrace { gates, cells, hidden }
    });
    let mut out = Vec::with_capacity(g.n * h);
    for tr in &traces {
        out.extend_from_slice(&tr.hidden[g.len * h..]);
    }
    (out, traces)
}

/// Returns `(d_w_ih ++ d_w_hh ++ d_b, d_input)`.
pub fn lstm_backward(
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    traces: &[LstmTrace],
    dh_out: &[f64],
    g: &LstmGeom,
    want_dx: bool,
) -> (Vec<f64>, Vec<f64>) {
    let h = g.hidden;
    let (li, lh, lb) = g.param_lens();
    let in_block = g.c * g.len;
    par::chunked_sum_and_concat(g.n, li + lh + lb, |start, end| {
        let mut dp = vec![0.0; li + lh + lb];
        let mut dx = if want_dx {
            vec![0.0; (end - start) * in_block]
        } else {
            Vec::new()
        };
        let mut xt = vec![0.0; g.c];
        let mut dz = vec![0.0; 4 * h];
        let mut dh_prev = vec![0.0; h];
        for s in start..end {
            let tr = &traces[s];
            let xs = &x[s * in_block..(s + 1) * in_block];
            let mut dh = dh_out[s * h..(s + 1) * h].to_vec();
            let mut dc = vec![0.0; h];
            for t in (0..g.len).rev() {
                let a = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
                let c_prev = &tr.cells[t * h..(t + 1) * h];
                let c_t = &tr.cells[(t + 1) * h..(t + 2) * h];
                let h_prev = &tr.hidden[t * h..(t + 1) * h];
                for k in 0..h {
                    let (i, f, gg, o) = (a[k], a[h + k], a[2 * h + k], a[3 * h + k]);
                    let tc = c_t[k].tanh();
                    let d_o = dh[k] * tc;
                    dc[k] += dh[k] * o * (1.0 - tc * tc);
                    dz[k] = dc[k] * gg * i * (1.0 - i);
                    dz[h + k] = dc[k] * c_prev[k] * f * (1.0 - f);
                    dz[2 * h + k] = dc[k] * i * (1.0 - gg * gg);
                    dz[3 * h + k] = d_o * o * (1.0 - o);
                    dc[k] *= f;
                }
                input_at(xs, g, t, &mut xt);
                dh_prev.fill(0.0);
                for (r, &d) in dz.iter().enumerate() {
                    for (ch, xv) in xt.iter().enumerate() {
                        dp[r * g.c + ch] += d * xv;
                    }
                    let wh = &w_hh[r * h..(r + 1) * h];
                    for k in 0..h {
                        dp[li + r * h + k] += d * h_prev[k];
                        dh_prev[k] += wh[k] * d;
                    }
                    dp[li + lh + r] += d;
                    if want_dx {
                        let base = (s - start) * in_block;
                        for ch in 0..g.c {
                            dx[base + ch * g.len + t] += w_ih[r * g.c + ch] * d;
                        }
                    }
                }
                dh.copy_from_slice(&dh_prev);
            }
        }
        (dp, dx)
    })
}
