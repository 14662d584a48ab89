#![allow(dead_code)]

use itsc_core::cost::{self, LambdaState};
use itsc_core::nn::{sigmoid_scalar, BnRunning, Graph, Padding, Tensor, Var};
use itsc_core::rng;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const TRIALS: usize = 100;

/// `max |analytic - numeric| / max |numeric|`, denominator floored at 1e-6.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = numeric.iter().map(|n| n.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-6)
}

pub fn random_tensor(r: &mut impl Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap().with_grad()
}

/// Values at least `gap` away from zero.
pub fn away_from_zero(r: &mut impl Rng, shape: Vec<usize>, gap: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.random_range(gap..1.0);
            if r.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap().with_grad()
}

/// Pairwise-distinct values on a grid with spacing well above the FD step,
/// so no pooling window has a near tie.
pub fn distinct_values(r: &mut impl Rng, shape: Vec<usize>) -> Tensor {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
    data.shuffle(r);
    Tensor::new(shape, data).unwrap().with_grad()
}

type Build<'a> = dyn Fn(&mut Graph, &[Var]) -> Var + 'a;

fn scalar(inputs: &[Tensor], build: &Build, proj: &[f64]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.value(out).data().iter().zip(proj).map(|(y, p)| y * p).sum()
}

/// Checks the gradients of a random projection of `build`'s output with
/// respect to every input. Returns the worst relative error over inputs.
pub fn check(r: &mut impl Rng, inputs: Vec<Tensor>, build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars);
    let proj: Vec<f64> = (0..g.value(out).numel()).map(|_| r.random_range(-1.0..1.0)).collect();
    g.backward(out, &proj).unwrap();
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).expect("leaf gradient").to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= FD_STEP;
            *slot = (scalar(&plus, build, &proj) - scalar(&minus, build, &proj)) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

fn dim(r: &mut impl Rng, lo: usize, hi: usize) -> usize {
    r.random_range(lo..=hi)
}

pub fn conv1d_trial(r: &mut impl Rng) -> f64 {
    let (n, c_in, c_out) = (dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 3));
    let len = dim(r, 3, 16);
    let k = dim(r, 1, len.min(5));
    let stride = dim(r, 1, 3);
    let padding = if r.random::<bool>() {
        Padding::Same
    } else {
        Padding::Valid
    };
    let inputs = vec![
        random_tensor(r, vec![n, c_in, len]),
        random_tensor(r, vec![c_out, c_in, k]),
        random_tensor(r, vec![c_out]),
    ];
    check(r, inputs, &|g, v| g.conv1d(v[0], v[1], v[2], stride, padding).unwrap())
}

pub fn max_pool1d_trial(r: &mut impl Rng) -> f64 {
    let (n, c, len) = (dim(r, 1, 4), dim(r, 1, 3), dim(r, 2, 16));
    let pool = dim(r, 1, len.min(4));
    let stride = dim(r, 1, pool);
    let inputs = vec![distinct_values(r, vec![n, c, len])];
    check(r, inputs, &|g, v| g.max_pool1d(v[0], pool, stride).unwrap())
}

pub fn global_avg_pool1d_trial(r: &mut impl Rng) -> f64 {
    let shape = vec![dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 16)];
    let inputs = vec![random_tensor(r, shape)];
    check(r, inputs, &|g, v| g.global_avg_pool1d(v[0]).unwrap())
}

pub fn batch_norm1d_trial(r: &mut impl Rng) -> f64 {
    let (n, c, len) = (dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 16));
    let train = n * len >= 2 && r.random::<bool>();
    let running_mean: Vec<f64> = (0..c).map(|_| r.random_range(-0.5..0.5)).collect();
    let running_var: Vec<f64> = (0..c).map(|_| r.random_range(0.5..2.0)).collect();
    let inputs = vec![
        random_tensor(r, vec![n, c, len]),
        random_tensor(r, vec![c]),
        random_tensor(r, vec![c]),
    ];
    check(r, inputs, &move |g, v| {
        let mut running = BnRunning::new(c, 0.9, 1e-3);
        running.mean.clone_from(&running_mean);
        running.var.clone_from(&running_var);
        g.batch_norm1d(v[0], v[1], v[2], &mut running, train).unwrap()
    })
}

pub fn relu_trial(r: &mut impl Rng) -> f64 {
    let shape = vec![dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 16)];
    let inputs = vec![away_from_zero(r, shape, 1e-3)];
    check(r, inputs, &|g, v| g.relu(v[0]))
}

pub fn sigmoid_trial(r: &mut impl Rng) -> f64 {
    let shape = vec![dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 16)];
    let mut x = random_tensor(r, shape);
    x.data_mut().iter_mut().for_each(|v| *v *= 6.0);
    check(r, vec![x], &|g, v| g.sigmoid(v[0]))
}

pub fn dropout_trial(r: &mut impl Rng) -> f64 {
    let shape = vec![dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 16)];
    let rate = r.random_range(0.0..0.9);
    let seed = r.random::<u64>();
    let inputs = vec![random_tensor(r, shape)];
    check(r, inputs, &|g, v| g.dropout(v[0], rate, true, seed).unwrap())
}

pub fn dense_trial(r: &mut impl Rng) -> f64 {
    let (n, f, u) = (dim(r, 1, 4), dim(r, 1, 12), dim(r, 1, 6));
    let inputs = vec![
        random_tensor(r, vec![n, f]),
        random_tensor(r, vec![f, u]),
        random_tensor(r, vec![u]),
    ];
    check(r, inputs, &|g, v| g.dense(v[0], v[1], v[2]).unwrap())
}

pub fn lstm_trial(r: &mut impl Rng) -> f64 {
    let (n, c, len, h) = (dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 16), dim(r, 1, 4));
    let inputs = vec![
        random_tensor(r, vec![n, c, len]),
        random_tensor(r, vec![4 * h, c]),
        random_tensor(r, vec![4 * h, h]),
        random_tensor(r, vec![4 * h]),
    ];
    check(r, inputs, &|g, v| g.lstm(v[0], v[1], v[2], v[3]).unwrap())
}

pub fn residual_add_trial(r: &mut impl Rng) -> f64 {
    let shape = vec![dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 16)];
    let inputs = vec![random_tensor(r, shape.clone()), random_tensor(r, shape)];
    // Reusing the first input checks gradient accumulation on a shared node.
    check(r, inputs, &|g, v| {
        let s = g.residual_add(v[0], v[1]).unwrap();
        g.residual_add(s, v[0]).unwrap()
    })
}

pub fn concat_trial(r: &mut impl Rng) -> f64 {
    let (n, a, b) = (dim(r, 1, 4), dim(r, 1, 6), dim(r, 1, 6));
    let inputs = vec![random_tensor(r, vec![n, a]), random_tensor(r, vec![n, b])];
    check(r, inputs, &|g, v| g.concat_features(v[0], v[1]).unwrap())
}

pub fn reshape_trial(r: &mut impl Rng) -> f64 {
    let shape = vec![dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 16)];
    let inputs = vec![random_tensor(r, shape)];
    check(r, inputs, &|g, v| {
        let s = g.swap_axes(v[0]).unwrap();
        g.flatten(s).unwrap()
    })
}

/// Class-balanced weighted BCE on sigmoid(logits): closed-form logit
/// gradient against central differences of the scalar loss.
pub fn loss_chain_trial(r: &mut impl Rng) -> f64 {
    let n = dim(r, 2, 32);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.3))).collect();
    labels[0] = 1;
    labels[1] = 0;
    let logits: Vec<f64> = (0..n).map(|_| r.random_range(-4.0..4.0)).collect();
    let state = cost::update_lambda(
        r.random_range(1.0..50.0),
        Some(r.random_range(0.0..1.0)),
        r.random_range(0.0..1.0),
    )
    .unwrap();
    let loss = |z: &[f64]| total_loss(z, &labels, &state);
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid_scalar(z)).collect();
    let analytic = cost::loss_gradient(&probs, &labels, &state);
    let numeric: Vec<f64> = (0..n)
        .map(|i| {
            let mut p = logits.clone();
            p[i] += FD_STEP;
            let mut m = logits.clone();
            m[i] -= FD_STEP;
            (loss(&p) - loss(&m)) / (2.0 * FD_STEP)
        })
        .collect();
    rel_err(&analytic, &numeric)
}

pub fn total_loss(logits: &[f64], labels: &[u8], state: &LambdaState) -> f64 {
    let losses: Vec<f64> = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| cost::weighted_bce(sigmoid_scalar(z), y, state))
        .collect();
    cost::class_balanced_loss(&losses, labels).unwrap()
}

pub type Trial = fn(&mut rng::Rng) -> f64;

pub const LAYER_TRIALS: [(&str, Trial); 13] = [
    ("conv1d", conv1d_trial),
    ("max_pool1d", max_pool1d_trial),
    ("global_avg_pool1d", global_avg_pool1d_trial),
    ("batch_norm1d", batch_norm1d_trial),
    ("relu", relu_trial),
    ("sigmoid", sigmoid_trial),
    ("dropout", dropout_trial),
    ("dense", dense_trial),
    ("lstm", lstm_trial),
    ("residual_add", residual_add_trial),
    ("concat_features", concat_trial),
    ("flatten/swap_axes", reshape_trial),
    ("loss_chain", loss_chain_trial),
];

/// Worst relative error over [`TRIALS`] seeded trials.
pub fn worst_over_trials(name: &str, trial: Trial) -> f64 {
    let tag = name
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    let mut r = rng::stream(0x6752_4144, &[tag]);
    (0..TRIALS).map(|_| trial(&mut r)).fold(0.0, f64::max)
}

pub mod samplers;
