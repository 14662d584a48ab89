use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainMode};
use crate::cost::{self, LambdaAssignment, LambdaState};
use crate::data::{imbalance_ratio, shuffled_minibatches, Dataset, POSITIVE};
use crate::error::{Error, Result};
use crate::metrics::{confusion, scalar_metrics, MetricRecord, MetricValue};
use crate::models::{batch_tensor, predict, threshold_labels, Mode, Model};
use crate::nn::{adam_step, Graph};
use crate::resample::resample_dataset;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub size: usize,
    pub positives: usize,
    pub loss: f64,
    /// Batch G-mean at the decision threshold, from the pre-update forward pass.
    pub gmean: MetricValue,
    pub acc: f64,
    /// Set in cost-sensitive mode only.
    pub lambda_minority: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub mode: TrainMode,
    /// Imbalance ratio used by the cost modes.
    pub ir_overall: Option<f64>,
    /// Samples trained on, after any resampling.
    pub train_size: usize,
    pub train_positives: usize,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub batches: Vec<BatchRecord>,
    pub empty_class_batches: usize,
    pub wall_time_secs: f64,
}

/// Cost-sensitive loss for one batch: λ from the overall IR and the batch
/// G-mean/accuracy, class-balanced weighted cross-entropy, and its logit
/// gradient.
pub fn adaptive_batch_loss(
    probs: &[f64],
    labels: &[u8],
    ir_overall: f64,
    gmean_batch: Option<f64>,
    acc_batch: f64,
    assignment: LambdaAssignment,
) -> Result<(f64, Vec<f64>, LambdaState)> {
    let state = cost::update_lambda(ir_overall, gmean_batch, acc_batch)?.with_assignment(assignment);
    let losses: Vec<f64> = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| cost::weighted_bce(p, y, &state))
        .collect();
    let loss = cost::class_balanced_loss(&losses, labels)?;
    Ok((loss, cost::loss_gradient(probs, labels, &state), state))
}

/// Trains `model` following the configured mode and returns it in eval mode.
///
/// Per batch: forward pass, batch G-mean and accuracy at the threshold, λ
/// update (cost-sensitive mode), loss, gradients, one Adam step per parameter.
pub fn train(mut model: Model, data: &Dataset, config: &TrainConfig) -> Result<(Model, TrainLog)> {
    config.validate()?;
    if data.stats().is_none() {
        return Err(Error::NotNormalized);
    }
    let start = Instant::now();
    let resampled;
    let data = match (config.mode, &config.sampler) {
        (TrainMode::Sampled, Some(s)) => {
            resampled = resample_dataset(data, s)?;
            &resampled
        }
        _ => data,
    };
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ir = match config.mode {
        TrainMode::CostSensitive | TrainMode::FixedCost => Some(imbalance_ratio(data)?),
        _ => None,
    };
    let (train_positives, _) = data.class_counts();
    let mut log = TrainLog {
        mode: config.mode,
        ir_overall: ir,
        train_size: data.len(),
        train_positives,
        epoch_losses: Vec::with_capacity(config.epochs),
        batches: Vec::new(),
        empty_class_batches: 0,
        wall_time_secs: 0.0,
    };
    let labels_all = data.labels();
    model.set_mode(Mode::Train);
    for epoch in 0..config.epochs {
        let plan = shuffled_minibatches(data.len(), config.batch_size, config.seed, epoch);
        let mut epoch_loss = 0.0;
        for (b, idx) in plan.batches.iter().enumerate() {
            let labels: Vec<u8> = idx.iter().map(|&i| labels_all[i]).collect();
            let positives = labels.iter().filter(|&&y| y == POSITIVE).count();
            if positives == 0 || positives == labels.len() {
                log.empty_class_batches += 1;
            }
            let mut g = Graph::new();
            let dropout_seed = rng::derive(config.seed, &[0x4452_4f50, epoch as u64, b as u64]);
            let f = model.forward_graph(&mut g, batch_tensor(data, idx), true, dropout_seed)?;
            let probs = g.value(f.probs).data().to_vec();
            let preds = threshold_labels(&probs, config.threshold);
            let batch_metrics = scalar_metrics(&confusion(&labels, &preds)?);
            let acc = batch_metrics.acc.value().unwrap_or(0.0);
            let (loss, grad, lambda) = match config.mode {
                TrainMode::CostSensitive => {
                    let (loss, grad, state) = adaptive_batch_loss(
                        &probs,
                        &labels,
                        ir.expect("set for cost modes"),
                        batch_metrics.gmean.value(),
                        acc,
                        config.lambda_assignment,
                    )?;
                    (loss, grad, Some(state.lambda_minority))
                }
                TrainMode::FixedCost => {
                    let w = ir.expect("set for cost modes");
                    (
                        cost::weighted_mean_bce(&probs, &labels, w, 1.0),
                        cost::weighted_mean_gradient(&probs, &labels, w, 1.0),
                        None,
                    )
                }
                TrainMode::Plain | TrainMode::Sampled => (
                    cost::weighted_mean_bce(&probs, &labels, 1.0, 1.0),
                    cost::weighted_mean_gradient(&probs, &labels, 1.0, 1.0),
                    None,
                ),
            };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            g.backward(f.logits, &grad)?;
            let grads: Vec<Vec<f64>> = f
                .params
                .iter()
                .zip(model.params())
                .map(|(v, p)| {
                    g.grad(*v)
                        .map(<[f64]>::to_vec)
                        .unwrap_or_else(|| vec![0.0; p.value.numel()])
                })
                .collect();
            if let Some((p, _)) = model
                .params()
                .iter()
                .zip(&grads)
                .find(|(_, gr)| gr.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
            for (p, gr) in model.params_mut().iter_mut().zip(&grads) {
                adam_step(p, gr, &config.adam)?;
            }
            model.set_bn_running(f.bn_running)?;
            epoch_loss += loss;
            log.batches.push(BatchRecord {
                epoch,
                batch: b,
                size: idx.len(),
                positives,
                loss,
                gmean: batch_metrics.gmean,
                acc,
                lambda_minority: lambda,
            });
        }
        log.epoch_losses.push(epoch_loss / plan.batches.len() as f64);
    }
    model.set_mode(Mode::Eval);
    log.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((model, log))
}

/// Hard-label metrics at `threshold` plus ROC/PR AUC from the raw scores.
pub fn evaluate(model: &Model, data: &Dataset, threshold: f64) -> Result<MetricRecord> {
    let (scores, _) = predict(model, data, threshold)?;
    MetricRecord::from_scores(&data.labels(), &scores, threshold)
}
