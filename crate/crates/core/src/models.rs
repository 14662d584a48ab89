//! The five temporal networks: MLP, CNN, FCN, ResNet and LSTM-FCN.
//!
//! A model is an ordered list of [`LayerConfig`]s (with residual blocks and
//! parallel branches as nested lists) ending in a one-unit dense layer and a
//! sigmoid. Hyperparameters have defaults per kind and can be overridden by
//! name; the resolved values are kept in the [`ModelSpec`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{checkpoint, BnRunning, Graph, Padding, Param, Tensor, Var};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Cnn,
    Fcn,
    Resnet,
    LstmFcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Mlp,
        ModelKind::Cnn,
        ModelKind::Fcn,
        ModelKind::Resnet,
        ModelKind::LstmFcn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
            ModelKind::Fcn => "fcn",
            ModelKind::Resnet => "resnet",
            ModelKind::LstmFcn => "lstm_fcn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownModelKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerConfig {
    Conv1d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    MaxPool1d {
        pool: usize,
        stride: usize,
    },
    GlobalAvgPool1d,
    BatchNorm1d {
        momentum: f64,
        epsilon: f64,
    },
    Relu,
    Sigmoid,
    Dropout {
        rate: f64,
    },
    Dense {
        units: usize,
    },
    Flatten,
    /// Swaps the channel and time axes.
    SwapAxes,
    Lstm {
        hidden: usize,
    },
    /// `body(x) + shortcut(x)`; the shortcut is a kernel-1 convolution when
    /// the body changes the channel count, otherwise the identity.
    Residual {
        body: Vec<LayerConfig>,
    },
    /// Runs each branch on the same input and concatenates their feature rows.
    Concat {
        branches: Vec<Vec<LayerConfig>>,
    },
}

/// Resolved description of a built model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// `(channels, length)`.
    pub input_shape: (usize, usize),
    pub hyperparams: Value,
    pub layers: Vec<LayerConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MlpHyper {
    hidden: Vec<usize>,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper {
            hidden: vec![32, 32, 64],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CnnHyper {
    filters: Vec<usize>,
    kernels: Vec<usize>,
    /// Number of leading conv blocks followed by max pooling.
    pooled_blocks: usize,
    pool: usize,
    dropout: f64,
    dense_units: usize,
}

impl Default for CnnHyper {
    fn default() -> Self {
        CnnHyper {
            filters: vec![32, 64, 64],
            kernels: vec![5, 5, 3],
            pooled_blocks: 2,
            pool: 2,
            dropout: 0.5,
            dense_units: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FcnHyper {
    filters: Vec<usize>,
    kernels: Vec<usize>,
    bn_momentum: f64,
    bn_epsilon: f64,
}

impl Default for FcnHyper {
    fn default() -> Self {
        FcnHyper {
            filters: vec![128, 256, 128],
            kernels: vec![8, 5, 3],
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ResnetHyper {
    block_filters: Vec<usize>,
    kernels: Vec<usize>,
    bn_momentum: f64,
    bn_epsilon: f64,
}

impl Default for ResnetHyper {
    fn default() -> Self {
        ResnetHyper {
            block_filters: vec![64, 128, 128],
            kernels: vec![8, 5, 3],
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LstmFcnHyper {
    filters: Vec<usize>,
    kernels: Vec<usize>,
    bn_momentum: f64,
    bn_epsilon: f64,
    lstm_hidden: usize,
    lstm_dropout: f64,
    /// Feed the LSTM time steps as features over a channel axis.
    dimension_shuffle: bool,
}

impl Default for LstmFcnHyper {
    fn default() -> Self {
        let fcn = FcnHyper::default();
        LstmFcnHyper {
            filters: fcn.filters,
            kernels: fcn.kernels,
            bn_momentum: fcn.bn_momentum,
            bn_epsilon: fcn.bn_epsilon,
            lstm_hidden: 8,
            lstm_dropout: 0.8,
            dimension_shuffle: false,
        }
    }
}

fn resolve<H: Default + Serialize + DeserializeOwned>(
    kind: ModelKind,
    overrides: &BTreeMap<String, Value>,
) -> Result<(H, Value)> {
    let mut map = match serde_json::to_value(H::default())? {
        Value::Object(m) => m,
        _ => unreachable!("hyperparameter structs serialize to objects"),
    };
    for (name, v) in overrides {
        match map.get_mut(name) {
            Some(slot) => *slot = v.clone(),
            None => {
                return Err(Error::UnknownHyperparameter {
                    kind: kind.to_string(),
                    name: name.clone(),
                })
            }
        }
    }
    let value = Value::Object(map);
    let typed = serde_json::from_value(value.clone())
        .map_err(|e| Error::config(format!("model.overrides ({kind})"), e.to_string()))?;
    Ok((typed, value))
}

fn paired(filters: &[usize], kernels: &[usize], kind: ModelKind) -> Result<()> {
    if filters.len() != kernels.len() || filters.is_empty() {
        return Err(Error::config(
            format!("model.overrides ({kind})"),
            "filters and kernels must be non-empty and of equal length",
        ));
    }
    Ok(())
}

fn conv_same(filters: usize, kernel: usize) -> LayerConfig {
    LayerConfig::Conv1d {
        filters,
        kernel,
        stride: 1,
        padding: Padding::Same,
    }
}

fn fcn_trunk(filters: &[usize], kernels: &[usize], momentum: f64, epsilon: f64) -> Vec<LayerConfig> {
    let mut out = Vec::new();
    for (&f, &k) in filters.iter().zip(kernels) {
        out.push(conv_same(f, k));
        out.push(LayerConfig::BatchNorm1d { momentum, epsilon });
        out.push(LayerConfig::Relu);
    }
    out.push(LayerConfig::GlobalAvgPool1d);
    out
}

fn head() -> [LayerConfig; 2] {
    [LayerConfig::Dense { units: 1 }, LayerConfig::Sigmoid]
}

/// Resolves hyperparameters and produces the layer list for `kind`.
pub fn model_spec(
    kind: ModelKind,
    input_shape: (usize, usize),
    overrides: &BTreeMap<String, Value>,
) -> Result<ModelSpec> {
    let (hyperparams, mut layers) = match kind {
        ModelKind::Mlp => {
            let (h, v): (MlpHyper, _) = resolve(kind, overrides)?;
            let mut layers = vec![LayerConfig::Flatten];
            for units in h.hidden {
                layers.push(LayerConfig::Dense { units });
                layers.push(LayerConfig::Relu);
            }
            (v, layers)
        }
        ModelKind::Cnn => {
            let (h, v): (CnnHyper, _) = resolve(kind, overrides)?;
            paired(&h.filters, &h.kernels, kind)?;
            let mut layers = Vec::new();
            for (i, (&f, &k)) in h.filters.iter().zip(&h.kernels).enumerate() {
                layers.push(conv_same(f, k));
                layers.push(LayerConfig::Relu);
                if i < h.pooled_blocks {
                    layers.push(LayerConfig::MaxPool1d {
                        pool: h.pool,
                        stride: h.pool,
                    });
                }
            }
            layers.push(LayerConfig::Dropout { rate: h.dropout });
            layers.push(LayerConfig::Flatten);
            layers.push(LayerConfig::Dense { units: h.dense_units });
            layers.push(LayerConfig::Relu);
            (v, layers)
        }
        ModelKind::Fcn => {
            let (h, v): (FcnHyper, _) = resolve(kind, overrides)?;
            paired(&h.filters, &h.kernels, kind)?;
            (v, fcn_trunk(&h.filters, &h.kernels, h.bn_momentum, h.bn_epsilon))
        }
        ModelKind::Resnet => {
            let (h, v): (ResnetHyper, _) = resolve(kind, overrides)?;
            if h.block_filters.is_empty() || h.kernels.is_empty() {
                return Err(Error::config(
                    "model.overrides (resnet)",
                    "block_filters and kernels must be non-empty",
                ));
            }
            let bn = LayerConfig::BatchNorm1d {
                momentum: h.bn_momentum,
                epsilon: h.bn_epsilon,
            };
            let mut layers = Vec::new();
            for &f in &h.block_filters {
                let mut body = Vec::new();
                for (i, &k) in h.kernels.iter().enumerate() {
                    body.push(conv_same(f, k));
                    body.push(bn.clone());
                    if i + 1 < h.kernels.len() {
                        body.push(LayerConfig::Relu);
                    }
                }
                layers.push(LayerConfig::Residual { body });
                layers.push(LayerConfig::Relu);
            }
            layers.push(LayerConfig::GlobalAvgPool1d);
            (v, layers)
        }
        ModelKind::LstmFcn => {
            let (h, v): (LstmFcnHyper, _) = resolve(kind, overrides)?;
            paired(&h.filters, &h.kernels, kind)?;
            let mut lstm_branch = Vec::new();
            if h.dimension_shuffle {
                lstm_branch.push(LayerConfig::SwapAxes);
            }
            lstm_branch.push(LayerConfig::Lstm { hidden: h.lstm_hidden });
            lstm_branch.push(LayerConfig::Dropout { rate: h.lstm_dropout });
            let layers = vec![LayerConfig::Concat {
                branches: vec![
                    fcn_trunk(&h.filters, &h.kernels, h.bn_momentum, h.bn_epsilon),
                    lstm_branch,
                ],
            }];
            (v, layers)
        }
    };
    layers.extend(head());
    Ok(ModelSpec {
        kind,
        input_shape,
        hyperparams,
        layers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Seq { channels: usize, length: usize },
    Flat(usize),
}

#[derive(Debug, Clone)]
enum Layer {
    Conv {
        w: usize,
        b: usize,
        stride: usize,
        padding: Padding,
    },
    MaxPool {
        pool: usize,
        stride: usize,
    },
    Gap,
    BatchNorm {
        gamma: usize,
        beta: usize,
        state: usize,
    },
    Relu,
    Sigmoid,
    Dropout {
        rate: f64,
        slot: u64,
    },
    Dense {
        w: usize,
        b: usize,
    },
    Flatten,
    SwapAxes,
    Lstm {
        w_ih: usize,
        w_hh: usize,
        b: usize,
    },
    Residual {
        body: Vec<Layer>,
        shortcut: Option<(usize, usize)>,
    },
    Concat {
        branches: Vec<Vec<Layer>>,
    },
}

struct Builder {
    seed: u64,
    params: Vec<Param>,
    bn: Vec<BnRunning>,
    dropout_slots: u64,
}

impl Builder {
    fn uniform(&mut self, name: String, shape: Vec<usize>, bound: f64) -> usize {
        let n: usize = shape.iter().product();
        let mut r = rng::stream(self.seed, &[self.params.len() as u64]);
        let data = (0..n)
            .map(|_| {
                if bound > 0.0 {
                    r.random_range(-bound..bound)
                } else {
                    0.0
                }
            })
            .collect();
        let t = Tensor::new(shape, data).expect("sized above").with_grad();
        self.params.push(Param::new(name, t));
        self.params.len() - 1
    }

    fn constant(&mut self, name: String, shape: Vec<usize>, value: f64) -> usize {
        let n: usize = shape.iter().product();
        let t = Tensor::new(shape, vec![value; n]).expect("sized above").with_grad();
        self.params.push(Param::new(name, t));
        self.params.len() - 1
    }

    fn conv(&mut self, prefix: &str, c_in: usize, filters: usize, kernel: usize) -> (usize, usize) {
        let fan_in = (c_in * kernel) as f64;
        let w = self.uniform(
            format!("{prefix}.weight"),
            vec![filters, c_in, kernel],
            (6.0 / fan_in).sqrt(),
        );
        let b = self.constant(format!("{prefix}.bias"), vec![filters], 0.0);
        (w, b)
    }

    fn build(&mut self, cfgs: &[LayerConfig], mut shape: Shape, prefix: &str) -> Result<(Vec<Layer>, Shape)> {
        let mut out = Vec::with_capacity(cfgs.len());
        for (i, cfg) in cfgs.iter().enumerate() {
            let name = format!("{prefix}{i}");
            let seq = |shape: Shape, what: &str| match shape {
                Shape::Seq { channels, length } => Ok((channels, length)),
                Shape::Flat(_) => Err(Error::Shape(format!(
                    "layer {name} ({what}) needs a channels × length input"
                ))),
            };
            let (layer, next) = match cfg {
                LayerConfig::Conv1d {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    let (c, l) = seq(shape, "conv1d")?;
                    if *filters == 0 || *kernel == 0 || *stride == 0 {
                        return Err(Error::Shape(format!("layer {name}: conv1d sizes must be positive")));
                    }
                    let length = match padding {
                        Padding::Same => l.div_ceil(*stride),
                        Padding::Valid if *kernel <= l => (l - kernel) / stride + 1,
                        Padding::Valid => {
                            return Err(Error::Shape(format!(
                                "layer {name}: kernel {kernel} longer than input {l}"
                            )))
                        }
                    };
                    let (w, b) = self.conv(&name, c, *filters, *kernel);
                    (
                        Layer::Conv {
                            w,
                            b,
                            stride: *stride,
                            padding: *padding,
                        },
                        Shape::Seq {
                            channels: *filters,
                            length,
                        },
                    )
                }
                LayerConfig::MaxPool1d { pool, stride } => {
                    let (c, l) = seq(shape, "max_pool1d")?;
                    if *pool == 0 || *stride == 0 || *pool > l {
                        return Err(Error::Shape(format!(
                            "layer {name}: pool {pool} invalid for length {l}"
                        )));
                    }
                    (
                        Layer::MaxPool {
                            pool: *pool,
                            stride: *stride,
                        },
                        Shape::Seq {
                            channels: c,
                            length: (l - pool) / stride + 1,
                        },
                    )
                }
                LayerConfig::GlobalAvgPool1d => {
                    let (c, _) = seq(shape, "global_avg_pool1d")?;
                    (Layer::Gap, Shape::Flat(c))
                }
                LayerConfig::BatchNorm1d { momentum, epsilon } => {
                    let (c, _) = seq(shape, "batch_norm1d")?;
                    let gamma = self.constant(format!("{name}.gamma"), vec![c], 1.0);
                    let beta = self.constant(format!("{name}.beta"), vec![c], 0.0);
                    self.bn.push(BnRunning::new(c, *momentum, *epsilon));
                    (
                        Layer::BatchNorm {
                            gamma,
                            beta,
                            state: self.bn.len() - 1,
                        },
                        shape,
                    )
                }
                LayerConfig::Relu => (Layer::Relu, shape),
                LayerConfig::Sigmoid => (Layer::Sigmoid, shape),
                LayerConfig::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::Shape(format!(
                            "layer {name}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    self.dropout_slots += 1;
                    (
                        Layer::Dropout {
                            rate: *rate,
                            slot: self.dropout_slots,
                        },
                        shape,
                    )
                }
                LayerConfig::Dense { units } => {
                    let f = match shape {
                        Shape::Flat(f) => f,
                        Shape::Seq { .. } => {
                            return Err(Error::Shape(format!("layer {name}: dense needs flat features")))
                        }
                    };
                    if *units == 0 {
                        return Err(Error::Shape(format!("layer {name}: dense with zero units")));
                    }
                    let w = self.uniform(format!("{name}.weight"), vec![f, *units], (6.0 / f as f64).sqrt());
                    let b = self.constant(format!("{name}.bias"), vec![*units], 0.0);
                    (Layer::Dense { w, b }, Shape::Flat(*units))
                }
                LayerConfig::Flatten => {
                    let f = match shape {
                        Shape::Seq { channels, length } => channels * length,
                        Shape::Flat(f) => f,
                    };
                    (Layer::Flatten, Shape::Flat(f))
                }
                LayerConfig::SwapAxes => {
                    let (c, l) = seq(shape, "swap_axes")?;
                    (Layer::SwapAxes, Shape::Seq { channels: l, length: c })
                }
                LayerConfig::Lstm { hidden } => {
                    let (c, _) = seq(shape, "lstm")?;
                    if *hidden == 0 {
                        return Err(Error::Shape(format!("layer {name}: lstm with zero hidden units")));
                    }
                    let bound = 1.0 / (*hidden as f64).sqrt();
                    let w_ih = self.uniform(format!("{name}.w_ih"), vec![4 * hidden, c], bound);
                    let w_hh = self.uniform(format!("{name}.w_hh"), vec![4 * hidden, *hidden], bound);
                    let b = self.uniform(format!("{name}.bias"), vec![4 * hidden], bound);
                    (Layer::Lstm { w_ih, w_hh, b }, Shape::Flat(*hidden))
                }
                LayerConfig::Residual { body } => {
                    let (c, _) = seq(shape, "residual")?;
                    let (layers, out_shape) = self.build(body, shape, &format!("{name}.body."))?;
                    let out_c = match out_shape {
                        Shape::Seq { channels, length } if Some(length) == seq(shape, "").ok().map(|s| s.1) => channels,
                        _ => {
                            return Err(Error::Shape(format!(
                                "layer {name}: residual body must preserve the time axis"
                            )))
                        }
                    };
                    let shortcut = (out_c != c).then(|| self.conv(&format!("{name}.shortcut"), c, out_c, 1));
                    (Layer::Residual { body: layers, shortcut }, out_shape)
                }
                LayerConfig::Concat { branches } => {
                    seq(shape, "concat")?;
                    let mut built = Vec::new();
                    let mut width = 0;
                    for (bi, branch) in branches.iter().enumerate() {
                        let (layers, s) = self.build(branch, shape, &format!("{name}.branch{bi}."))?;
                        match s {
                            Shape::Flat(f) => width += f,
                            Shape::Seq { .. } => {
                                return Err(Error::Shape(format!(
                                    "layer {name}: branch {bi} must end in flat features"
                                )))
                            }
                        }
                        built.push(layers);
                    }
                    if built.is_empty() {
                        return Err(Error::Shape(format!("layer {name}: concat without branches")));
                    }
                    (Layer::Concat { branches: built }, Shape::Flat(width))
                }
            };
            out.push(layer);
            shape = next;
        }
        Ok((out, shape))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Graph handles produced by one forward pass.
#[derive(Debug)]
pub struct Forward {
    /// One leaf per model parameter, in parameter order.
    pub params: Vec<Var>,
    /// Pre-sigmoid scores, shape `n × 1`.
    pub logits: Var,
    /// Positive-class probabilities, shape `n × 1`.
    pub probs: Var,
    /// Batch-norm running statistics after this pass (changed only in train mode).
    pub bn_running: Vec<BnRunning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<Param>,
    bn: Vec<BnRunning>,
    layers: Vec<Layer>,
    mode: Mode,
}

impl PartialEq for Layer {
    fn eq(&self, other: &Self) -> bool {
        format!("{self:?}") == format!("{other:?}")
    }
}

/// Builds a freshly initialized model in eval mode.
pub fn build_model(
    kind: ModelKind,
    input_shape: (usize, usize),
    overrides: &BTreeMap<String, Value>,
    seed: u64,
) -> Result<Model> {
    let (channels, length) = input_shape;
    if channels == 0 || length == 0 {
        return Err(Error::Shape(format!("input shape {input_shape:?} must be positive")));
    }
    let spec = model_spec(kind, input_shape, overrides)?;
    let mut b = Builder {
        seed,
        params: Vec::new(),
        bn: Vec::new(),
        dropout_slots: 0,
    };
    let (layers, out) = b.build(&spec.layers, Shape::Seq { channels, length }, "")?;
    if out != Shape::Flat(1) {
        return Err(Error::Shape(format!("model output {out:?} is not a single unit")));
    }
    Ok(Model {
        spec,
        params: b.params,
        bn: b.bn,
        layers,
        mode: Mode::Eval,
    })
}

struct Pass<'g> {
    g: &'g mut Graph,
    params: &'g [Var],
    bn: &'g mut [BnRunning],
    train: bool,
    seed: u64,
}

impl Pass<'_> {
    fn run(&mut self, layers: &[Layer], mut x: Var) -> Result<Var> {
        for layer in layers {
            x = self.step(layer, x)?;
        }
        Ok(x)
    }

    fn step(&mut self, layer: &Layer, x: Var) -> Result<Var> {
        let p = |i: &usize| self.params[*i];
        Ok(match layer {
            Layer::Conv { w, b, stride, padding } => self.g.conv1d(x, p(w), p(b), *stride, *padding)?,
            Layer::MaxPool { pool, stride } => self.g.max_pool1d(x, *pool, *stride)?,
            Layer::Gap => self.g.global_avg_pool1d(x)?,
            Layer::BatchNorm { gamma, beta, state } => {
                let (gm, bt) = (p(gamma), p(beta));
                self.g.batch_norm1d(x, gm, bt, &mut self.bn[*state], self.train)?
            }
            Layer::Relu => self.g.relu(x),
            Layer::Sigmoid => self.g.sigmoid(x),
            Layer::Dropout { rate, slot } => {
                let seed = rng::derive(self.seed, &[*slot]);
                self.g.dropout(x, *rate, self.train, seed)?
            }
            Layer::Dense { w, b } => self.g.dense(x, p(w), p(b))?,
            Layer::Flatten => self.g.flatten(x)?,
            Layer::SwapAxes => self.g.swap_axes(x)?,
            Layer::Lstm { w_ih, w_hh, b } => self.g.lstm(x, p(w_ih), p(w_hh), p(b))?,
            Layer::Residual { body, shortcut } => {
                let main = self.run(body, x)?;
                let side = match shortcut {
                    Some((w, b)) => self.g.conv1d(x, p(w), p(b), 1, Padding::Same)?,
                    None => x,
                };
                self.g.residual_add(main, side)?
            }
            Layer::Concat { branches } => {
                let mut acc: Option<Var> = None;
                for branch in branches {
                    let y = self.run(branch, x)?;
                    acc = Some(match acc {
                        Some(a) => self.g.concat_features(a, y)?,
                        None => y,
                    });
                }
                acc.expect("concat has branches")
            }
        })
    }
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn bn_running(&self) -> &[BnRunning] {
        &self.bn
    }

    pub fn set_bn_running(&mut self, bn: Vec<BnRunning>) -> Result<()> {
        if bn.len() != self.bn.len() {
            return Err(Error::Shape(format!(
                "{} batch-norm states for {} layers",
                bn.len(),
                self.bn.len()
            )));
        }
        self.bn = bn;
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Sets every trainable value to zero.
    pub fn zero_params(&mut self) {
        for p in &mut self.params {
            p.value.data_mut().fill(0.0);
        }
    }

    fn check_input(&self, batch: &Tensor) -> Result<usize> {
        let (c, l) = self.spec.input_shape;
        match batch.shape() {
            [n, bc, bl] if *bc == c && *bl == l && *n > 0 => Ok(*n),
            other => Err(Error::Shape(format!("model expects batch × {c} × {l}, got {other:?}"))),
        }
    }

    /// Records a forward pass on `g`. `train` selects dropout and batch-norm
    /// behaviour; `seed` keys the dropout masks. `self` is not modified:
    /// updated running statistics are returned in [`Forward::bn_running`].
    pub fn forward_graph(&self, g: &mut Graph, batch: Tensor, train: bool, seed: u64) -> Result<Forward> {
        self.check_input(&batch)?;
        let x = g.leaf(batch);
        let params: Vec<Var> = self.params.iter().map(|p| g.leaf(p.value.clone())).collect();
        let mut bn = self.bn.clone();
        let (body, last) = self.layers.split_at(self.layers.len() - 1);
        debug_assert!(matches!(last, [Layer::Sigmoid]));
        let logits = Pass {
            g: &mut *g,
            params: &params,
            bn: &mut bn,
            train,
            seed,
        }
        .run(body, x)?;
        let probs = g.sigmoid(logits);
        Ok(Forward {
            params,
            logits,
            probs,
            bn_running: bn,
        })
    }

    /// Positive-class probabilities for `batch` (`n × channels × length`),
    /// honouring the current mode. Train mode updates batch-norm running
    /// statistics.
    pub fn forward(&mut self, batch: &Tensor, seed: u64) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let train = self.mode == Mode::Train;
        let f = self.forward_graph(&mut g, batch.clone(), train, seed)?;
        if train {
            self.bn = f.bn_running;
        }
        Ok(g.value(f.probs).data().to_vec())
    }

    /// Inference-mode probabilities; never mutates the model.
    pub fn infer(&self, batch: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let f = self.forward_graph(&mut g, batch.clone(), false, 0)?;
        Ok(g.value(f.probs).data().to_vec())
    }

    /// Writes parameters and batch-norm running statistics.
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let mut entries: Vec<(String, Tensor)> =
            self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        for (i, bn) in self.bn.iter().enumerate() {
            let c = bn.mean.len();
            entries.push((format!("bn{i}.running_mean"), Tensor::new(vec![c], bn.mean.clone())?));
            entries.push((format!("bn{i}.running_var"), Tensor::new(vec![c], bn.var.clone())?));
        }
        checkpoint::write_tensors(w, &entries)
    }

    /// Loads values saved by [`Model::save`] into a model of the same spec.
    pub fn load<R: Read>(&mut self, r: R) -> Result<()> {
        let entries = checkpoint::read_tensors(r)?;
        let expected = self.params.len() + 2 * self.bn.len();
        if entries.len() != expected {
            return Err(Error::Checkpoint(format!(
                "{} tensors for a model with {expected}",
                entries.len()
            )));
        }
        let mut it = entries.into_iter();
        for p in &mut self.params {
            let (name, t) = it.next().unwrap();
            if name != p.name || t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} {:?} does not match parameter {} {:?}",
                    t.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value.data_mut().copy_from_slice(t.data());
        }
        for bn in &mut self.bn {
            let (_, m) = it.next().unwrap();
            let (_, v) = it.next().unwrap();
            if m.numel() != bn.mean.len() || v.numel() != bn.var.len() {
                return Err(Error::Checkpoint("batch-norm state size mismatch".into()));
            }
            bn.mean.copy_from_slice(m.data());
            bn.var.copy_from_slice(v.data());
        }
        Ok(())
    }
}

/// Stacks the samples at `indices` into an `n × channels × length` tensor.
pub fn batch_tensor(data: &Dataset, indices: &[usize]) -> Tensor {
    let width = data.channels() * data.length();
    let mut buf = Vec::with_capacity(indices.len() * width);
    for &i in indices {
        buf.extend_from_slice(&data.samples()[i].values);
    }
    Tensor::new(vec![indices.len(), data.channels(), data.length()], buf).expect("dataset rows are uniform")
}

const PREDICT_BATCH: usize = 256;

/// Inference-mode scores and hard labels (`score >= threshold`).
pub fn predict(model: &Model, data: &Dataset, threshold: f64) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut scores = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(PREDICT_BATCH) {
        scores.extend(model.infer(&batch_tensor(data, chunk))?);
    }
    let labels = threshold_labels(&scores, threshold);
    Ok((scores, labels))
}

/// Hard labels: 1 iff `score >= threshold`.
pub fn threshold_labels(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}
