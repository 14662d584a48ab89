//! Reverse-mode tape. Each op computes its forward value eagerly and records
//! what its backward pass needs; [`Graph::backward`] walks the tape once in
//! reverse and deposits gradients on leaves created with `requires_grad`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom};
use super::lstm::{self, LstmGeom, LstmTrace};
use super::{sigmoid_scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnRunning {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BnRunning {
    pub fn new(channels: usize, momentum: f64, epsilon: f64) -> Self {
        BnRunning {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum,
            epsilon,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    MaxPool {
        x: Var,
        arg: Vec<usize>,
    },
    GlobalAvgPool {
        x: Var,
        len: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Dropout {
        x: Var,
        scale: Vec<f64>,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Lstm {
        x: Var,
        w_ih: Var,
        w_hh: Var,
        b: Var,
        geom: LstmGeom,
        traces: Vec<LstmTrace>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Reshape {
        x: Var,
    },
    SwapAxes {
        x: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dims<const N: usize>(t: &Tensor, what: &str) -> Result<[usize; N]> {
    t.shape()
        .try_into()
        .map_err(|_| Error::Shape(format!("{what} expects rank {N}, got {:?}", t.shape())))
}

fn swap_last(x: &[f64], n: usize, a: usize, b: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for s in 0..n {
        let base = s * a * b;
        for i in 0..a {
            for j in 0..b {
                y[base + j * a + i] = x[base + i * b + j];
            }
        }
    }
    y
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inputs and parameters. Gradients are kept only for leaves whose tensor
    /// has `requires_grad` set.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = t.requires_grad;
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn make(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).expect("kernel output matches its shape")
    }

    /// Cross-correlation, `x: n×c_in×l`, `w: c_out×c_in×k`, `b: c_out`.
    /// `Same` padding yields `ceil(l / stride)` outputs with the extra pad on the right.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let [n, c_in, len] = dims(self.value(x), "conv1d input")?;
        let [c_out, wc_in, k] = dims(self.value(w), "conv1d kernel")?;
        let [bl] = dims(self.value(b), "conv1d bias")?;
        if wc_in != c_in {
            return Err(Error::Shape(format!(
                "conv1d input has {c_in} channels, kernel expects {wc_in}"
            )));
        }
        if bl != c_out || stride == 0 || k == 0 {
            return Err(Error::Shape(format!(
                "conv1d bias {bl} vs {c_out} filters, stride {stride}, kernel {k}"
            )));
        }
        let (pad_left, len_out) = match padding {
            Padding::Valid => {
                if k > len {
                    return Err(Error::Shape(format!("kernel {k} longer than input {len}")));
                }
                (0, (len - k) / stride + 1)
            }
            Padding::Same => {
                let len_out = len.div_ceil(stride);
                let total = ((len_out - 1) * stride + k).saturating_sub(len);
                (total / 2, len_out)
            }
        };
        let geom = ConvGeom {
            n,
            c_in,
            len,
            c_out,
            k,
            stride,
            pad_left,
            len_out,
        };
        let y = kernels::conv1d_forward(self.value(x).data(), self.value(w).data(), self.value(b).data(), &geom);
        Ok(self.push(
            Self::make(vec![n, c_out, len_out], y),
            Op::Conv { x, w, b, geom },
            &[x, w, b],
        ))
    }

    pub fn max_pool1d(&mut self, x: Var, pool: usize, stride: usize) -> Result<Var> {
        let [n, c, len] = dims(self.value(x), "max_pool1d input")?;
        if pool == 0 || pool > len || stride == 0 {
            return Err(Error::Shape(format!(
                "pool {pool} / stride {stride} invalid for length {len}"
            )));
        }
        let (y, arg) = kernels::max_pool_forward(self.value(x).data(), n, c, len, pool, stride);
        let len_out = y.len() / (n * c).max(1);
        Ok(self.push(Self::make(vec![n, c, len_out], y), Op::MaxPool { x, arg }, &[x]))
    }

    pub fn global_avg_pool1d(&mut self, x: Var) -> Result<Var> {
        let [n, c, len] = dims(self.value(x), "global_avg_pool1d input")?;
        if len == 0 {
            return Err(Error::Shape("global_avg_pool1d on empty time axis".into()));
        }
        let y: Vec<f64> = self
            .value(x)
            .data()
            .chunks_exact(len)
            .map(|r| r.iter().sum::<f64>() / len as f64)
            .collect();
        Ok(self.push(Self::make(vec![n, c], y), Op::GlobalAvgPool { x, len }, &[x]))
    }

    /// Train mode normalizes with batch statistics over `(batch, time)` and
    /// folds them into `running` with its momentum; eval mode uses `running`.
    pub fn batch_norm1d(&mut self, x: Var, gamma: Var, beta: Var, running: &mut BnRunning, train: bool) -> Result<Var> {
        let [n, c, len] = dims(self.value(x), "batch_norm1d input")?;
        let [gc] = dims(self.value(gamma), "batch_norm1d gamma")?;
        let [bc] = dims(self.value(beta), "batch_norm1d beta")?;
        if gc != c || bc != c || running.mean.len() != c || running.var.len() != c {
            return Err(Error::Shape(format!(
                "batch_norm1d over {c} channels with gamma {gc}, beta {bc}, running {}",
                running.mean.len()
            )));
        }
        let (mean, var) = if train {
            if n * len < 2 {
                return Err(Error::Shape(
                    "batch_norm1d in train mode needs at least 2 elements per channel".into(),
                ));
            }
            let (mean, var) = kernels::channel_moments(self.value(x).data(), n, c, len);
            let m = running.momentum;
            for ch in 0..c {
                running.mean[ch] = m * running.mean[ch] + (1.0 - m) * mean[ch];
                running.var[ch] = m * running.var[ch] + (1.0 - m) * var[ch];
            }
            (mean, var)
        } else {
            (running.mean.clone(), running.var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + running.epsilon).sqrt()).collect();
        let (y, xhat) = kernels::normalize_channels(
            self.value(x).data(),
            c,
            len,
            &mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        Ok(self.push(
            Self::make(vec![n, c, len], y),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let y = t.data().iter().map(|v| v.max(0.0)).collect();
        let shape = t.shape().to_vec();
        self.push(Self::make(shape, y), Op::Relu { x }, &[x])
    }

    /// Elementwise logistic function, kept strictly inside (0, 1).
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let y = t.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let shape = t.shape().to_vec();
        self.push(Self::make(shape, y), Op::Sigmoid { x }, &[x])
    }

    /// Inverted dropout. Identity in eval mode or at rate 0; otherwise each
    /// element is dropped when a uniform draw from the `seed` stream falls
    /// below `rate`, and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout(&mut self, x: Var, rate: f64, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mut r = rng::rng(seed);
        let t = self.value(x);
        let scale: Vec<f64> = (0..t.numel())
            .map(|_| if r.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let y = t.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Self::make(shape, y), Op::Dropout { x, scale }, &[x]))
    }

    /// `x: n×f`, `w: f×u`, `b: u`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let [n, f] = dims(self.value(x), "dense input")?;
        let [wf, u] = dims(self.value(w), "dense weights")?;
        let [bu] = dims(self.value(b), "dense bias")?;
        if wf != f || bu != u {
            return Err(Error::Shape(format!(
                "dense input {n}×{f}, weights {wf}×{u}, bias {bu}"
            )));
        }
        let y = kernels::dense_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            n,
            f,
            u,
        );
        Ok(self.push(Self::make(vec![n, u], y), Op::Dense { x, w, b }, &[x, w, b]))
    }

    /// `x: n×c×l` read as `l` steps of `c` features; returns the final hidden
    /// state `n×H`. `w_ih: 4H×c`, `w_hh: 4H×H`, `b: 4H`.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<Var> {
        let [n, c, len] = dims(self.value(x), "lstm input")?;
        let [g4, wc] = dims(self.value(w_ih), "lstm w_ih")?;
        let [g4h, hidden] = dims(self.value(w_hh), "lstm w_hh")?;
        let [bl] = dims(self.value(b), "lstm bias")?;
        if len == 0 || wc != c || g4 != 4 * hidden || g4h != g4 || bl != g4 {
            return Err(Error::Shape(format!(
                "lstm input {n}×{c}×{len}, w_ih {g4}×{wc}, w_hh {g4h}×{hidden}, bias {bl}"
            )));
        }
        let geom = LstmGeom { n, c, len, hidden };
        let (y, traces) = lstm::lstm_forward(
            self.value(x).data(),
            self.value(w_ih).data(),
            self.value(w_hh).data(),
            self.value(b).data(),
            &geom,
        );
        Ok(self.push(
            Self::make(vec![n, hidden], y),
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                b,
                geom,
                traces,
            },
            &[x, w_ih, w_hh, b],
        ))
    }

    pub fn residual_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!(
                "residual_add of {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let y = ta.data().iter().zip(tb.data()).map(|(p, q)| p + q).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Self::make(shape, y), Op::Add { a, b }, &[a, b]))
    }

    /// Feature-axis concatenation of `n×A` and `n×B`, `a` first.
    pub fn concat_features(&mut self, a: Var, b: Var) -> Result<Var> {
        let [na, fa] = dims(self.value(a), "concat lhs")?;
        let [nb, fb] = dims(self.value(b), "concat rhs")?;
        if na != nb {
            return Err(Error::Shape(format!("concat batch sizes {na} vs {nb}")));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut y = Vec::with_capacity(na * (fa + fb));
        for s in 0..na {
            y.extend_from_slice(&da[s * fa..(s + 1) * fa]);
            y.extend_from_slice(&db[s * fb..(s + 1) * fb]);
        }
        Ok(self.push(Self::make(vec![na, fa + fb], y), Op::Concat { a, b }, &[a, b]))
    }

    /// Collapses all non-batch axes.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let n = *t
            .shape()
            .first()
            .ok_or_else(|| Error::Shape("flatten of a scalar".into()))?;
        let f = t.numel() / n.max(1);
        let y = t.data().to_vec();
        Ok(self.push(Self::make(vec![n, f], y), Op::Reshape { x }, &[x]))
    }

    /// `n×a×b -> n×b×a`.
    pub fn swap_axes(&mut self, x: Var) -> Result<Var> {
        let [n, a, b] = dims(self.value(x), "swap_axes input")?;
        let y = swap_last(self.value(x).data(), n, a, b);
        Ok(self.push(Self::make(vec![n, b, a], y), Op::SwapAxes { x }, &[x]))
    }

    /// Backpropagates `seed` (same shape as `out`) through the tape.
    pub fn backward(&mut self, out: Var, seed: &[f64]) -> Result<()> {
        if seed.len() != self.value(out).numel() {
            return Err(Error::Shape(format!(
                "backward seed has {} entries for output of shape {:?}",
                seed.len(),
                self.value(out).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed.to_vec());

        fn add(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            let need = |v: &Var| self.nodes[v.0].needs_grad;
            let val = |v: &Var| self.nodes[v.0].value.data();
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(dy);
                }
                Op::Conv { x, w, b, geom } => {
                    let (dwb, dx) = kernels::conv1d_backward(val(x), val(w), &dy, geom, need(x));
                    let wl = geom.c_out * geom.c_in * geom.k;
                    if need(w) {
                        add(&mut grads, *w, dwb[..wl].to_vec());
                    }
                    if need(b) {
                        add(&mut grads, *b, dwb[wl..].to_vec());
                    }
                    if need(x) {
                        add(&mut grads, *x, dx);
                    }
                }
                Op::MaxPool { x, arg } => {
                    if need(x) {
                        let mut dx = vec![0.0; self.nodes[x.0].value.numel()];
                        for (d, &a) in dy.iter().zip(arg) {
                            dx[a] += d;
                        }
                        add(&mut grads, *x, dx);
                    }
                }
                Op::GlobalAvgPool { x, len } => {
                    if need(x) {
                        let scale = 1.0 / *len as f64;
                        let dx = dy.iter().flat_map(|d| std::iter::repeat_n(d * scale, *len)).collect();
                        add(&mut grads, *x, dx);
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    train,
                } => {
                    let [n, c, len]: [usize; 3] = self.nodes[x.0].value.shape().try_into().unwrap();
                    let (sum_dy, sum_dyx) = kernels::channel_grad_sums(&dy, xhat, n, c, len);
                    if need(gamma) {
                        add(&mut grads, *gamma, sum_dyx.clone());
                    }
                    if need(beta) {
                        add(&mut grads, *beta, sum_dy.clone());
                    }
                    if need(x) {
                        let g = val(gamma);
                        let count = (n * len) as f64;
                        let dx = dy
                            .iter()
                            .zip(xhat)
                            .enumerate()
                            .map(|(idx, (d, xh))| {
                                let ch = (idx / len) % c;
                                let k = g[ch] * inv_std[ch];
                                if *train {
                                    k * (d - sum_dy[ch] / count - xh * sum_dyx[ch] / count)
                                } else {
                                    k * d
                                }
                            })
                            .collect();
                        add(&mut grads, *x, dx);
                    }
                }
                Op::Relu { x } => {
                    let dx = dy
                        .iter()
                        .zip(val(x))
                        .map(|(d, v)| if *v > 0.0 { *d } else { 0.0 })
                        .collect();
                    add(&mut grads, *x, dx);
                }
                Op::Sigmoid { x } => {
                    let dx = dy
                        .iter()
                        .zip(node.value.data())
                        .map(|(d, s)| d * s * (1.0 - s))
                        .collect();
                    add(&mut grads, *x, dx);
                }
                Op::Dropout { x, scale } => {
                    let dx = dy.iter().zip(scale).map(|(d, s)| d * s).collect();
                    add(&mut grads, *x, dx);
                }
                Op::Dense { x, w, b } => {
                    let [n, f]: [usize; 2] = self.nodes[x.0].value.shape().try_into().unwrap();
                    let u = dy.len() / n.max(1);
                    let (dwb, dx) = kernels::dense_backward(val(x), val(w), &dy, n, f, u, need(x));
                    if need(w) {
                        add(&mut grads, *w, dwb[..f * u].to_vec());
                    }
                    if need(b) {
                        add(&mut grads, *b, dwb[f * u..].to_vec());
                    }
                    if need(x) {
                        add(&mut grads, *x, dx);
                    }
                }
                Op::Lstm {
                    x,
                    w_ih,
                    w_hh,
                    b,
                    geom,
                    traces,
                } => {
                    let (dp, dx) = lstm::lstm_backward(val(x), val(w_ih), val(w_hh), traces, &dy, geom, need(x));
                    let (li, lh, _) = geom.param_lens();
                    if need(w_ih) {
                        add(&mut grads, *w_ih, dp[..li].to_vec());
                    }
                    if need(w_hh) {
                        add(&mut grads, *w_hh, dp[li..li + lh].to_vec());
                    }
                    if need(b) {
                        add(&mut grads, *b, dp[li + lh..].to_vec());
                    }
                    if need(x) {
                        add(&mut grads, *x, dx);
                    }
                }
                Op::Add { a, b } => {
                    let (na, nb) = (need(a), need(b));
                    if na {
                        add(&mut grads, *a, dy.clone());
                    }
                    if nb {
                        add(&mut grads, *b, dy);
                    }
                }
                Op::Concat { a, b } => {
                    let [n, fa]: [usize; 2] = self.nodes[a.0].value.shape().try_into().unwrap();
                    let fb = dy.len() / n.max(1) - fa;
                    let (mut da, mut db) = (Vec::with_capacity(n * fa), Vec::with_capacity(n * fb));
                    for row in dy.chunks_exact(fa + fb) {
                        da.extend_from_slice(&row[..fa]);
                        db.extend_from_slice(&row[fa..]);
                    }
                    if need(a) {
                        add(&mut grads, *a, da);
                    }
                    if need(b) {
                        add(&mut grads, *b, db);
                    }
                }
                Op::Reshape { x } => {
                    add(&mut grads, *x, dy);
                }
                Op::SwapAxes { x } => {
                    let [n, a, b]: [usize; 3] = self.nodes[x.0].value.shape().try_into().unwrap();
                    add(&mut grads, *x, swap_last(&dy, n, b, a));
                }
            }
        }

        for (i, g) in grads.into_iter().enumerate() {
            if let (Some(g), Op::Leaf) = (g, &self.nodes[i].op) {
                if self.nodes[i].needs_grad {
                    self.nodes[i].value.set_grad(g)?;
                }
            }
        }
        Ok(())
    }
}
