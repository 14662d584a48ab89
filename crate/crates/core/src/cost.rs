//! Adaptive misclassification-cost weighting and the losses built on it.
//!
//! Per minibatch the minority weight is
//! `λ = IR_overall · exp(-G_mean_batch / 2) · exp(-Acc_batch / 2)` and the
//! majority weight is 1. The weighted cross-entropy is averaged per class and
//! the two class means are summed. λ is a plain number: no gradient flows
//! through it.

use serde::{Deserialize, Serialize};

use crate::data::POSITIVE;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Which class receives the imbalance-scaled weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaAssignment {
    /// Scaled weight on positive (minority) instances.
    #[default]
    Minority,
    /// Scaled weight on negative (majority) instances, unit weight on positives.
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaState {
    pub ir_overall: f64,
    /// `None` when the batch G-mean is undefined; λ then uses 0.
    pub gmean_batch: Option<f64>,
    pub acc_batch: f64,
    pub lambda_minority: f64,
    pub lambda_majority: f64,
    pub assignment: LambdaAssignment,
}

impl LambdaState {
    /// Unit weights on both classes.
    pub fn unit() -> Self {
        LambdaState {
            ir_overall: 1.0,
            gmean_batch: Some(0.0),
            acc_batch: 0.0,
            lambda_minority: 1.0,
            lambda_majority: 1.0,
            assignment: LambdaAssignment::Minority,
        }
    }

    pub fn with_assignment(mut self, assignment: LambdaAssignment) -> Self {
        self.assignment = assignment;
        self
    }

    /// Loss weight applied to an instance of class `label`.
    pub fn weight_for(&self, label: u8) -> f64 {
        let scaled = match self.assignment {
            LambdaAssignment::Minority => label == POSITIVE,
            LambdaAssignment::Majority => label != POSITIVE,
        };
        if scaled {
            self.lambda_minority
        } else {
            self.lambda_majority
        }
    }
}

pub fn update_lambda(ir_overall: f64, gmean_batch: Option<f64>, acc_batch: f64) -> Result<LambdaState> {
    if !(ir_overall.is_finite() && ir_overall > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "overall imbalance ratio must be positive, got {ir_overall}"
        )));
    }
    let unit = 0.0..=1.0;
    if let Some(g) = gmean_batch {
        if !unit.contains(&g) {
            return Err(Error::InvalidArgument(format!("batch G-mean {g} outside [0, 1]")));
        }
    }
    if !unit.contains(&acc_batch) {
        return Err(Error::InvalidArgument(format!(
            "batch accuracy {acc_batch} outside [0, 1]"
        )));
    }
    let g = gmean_batch.unwrap_or(0.0);
    Ok(LambdaState {
        ir_overall,
        gmean_batch,
        acc_batch,
        lambda_minority: ir_overall * (-g / 2.0).exp() * (-acc_batch / 2.0).exp(),
        lambda_majority: 1.0,
        assignment: LambdaAssignment::Minority,
    })
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Per-instance cross-entropy scaled by the class weight from `state`.
pub fn weighted_bce(prob: f64, label: u8, state: &LambdaState) -> f64 {
    let p = clamp_prob(prob);
    let w = state.weight_for(label);
    if label == POSITIVE {
        w * -p.ln()
    } else {
        w * -(1.0 - p).ln()
    }
}

/// Mean of positive-instance losses plus mean of negative-instance losses.
/// A class absent from the batch contributes 0.
pub fn class_balanced_loss(losses: &[f64], labels: &[u8]) -> Result<f64> {
    if losses.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} losses for {} labels",
            losses.len(),
            labels.len()
        )));
    }
    let (mut sum_pos, mut n_pos, mut sum_neg, mut n_neg) = (0.0, 0usize, 0.0, 0usize);
    for (l, &y) in losses.iter().zip(labels) {
        if y == POSITIVE {
            sum_pos += l;
            n_pos += 1;
        } else {
            sum_neg += l;
            n_neg += 1;
        }
    }
    if n_pos == 0 && n_neg == 0 {
        return Err(Error::EmptyDataset);
    }
    if n_pos == 0 || n_neg == 0 {
        log::debug!("single-class batch: {n_pos} positive, {n_neg} negative");
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(mean(sum_pos, n_pos) + mean(sum_neg, n_neg))
}

/// Derivative of `class_balanced_loss(weighted_bce(sigmoid(z)))` with respect
/// to each pre-sigmoid logit `z`.
pub fn loss_gradient(probs: &[f64], labels: &[u8], state: &LambdaState) -> Vec<f64> {
    let n_pos = labels.iter().filter(|&&y| y == POSITIVE).count();
    let n_neg = labels.len() - n_pos;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let w = state.weight_for(y);
            if y == POSITIVE {
                w * (p - 1.0) / n_pos as f64
            } else {
                w * p / n_neg as f64
            }
        })
        .collect()
}

/// Plain empirical mean of class-weighted cross-entropy over the batch.
pub fn weighted_mean_bce(probs: &[f64], labels: &[u8], w_pos: f64, w_neg: f64) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            if y == POSITIVE {
                w_pos * -p.ln()
            } else {
                w_neg * -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len() as f64
}

/// Logit gradient of [`weighted_mean_bce`].
pub fn weighted_mean_gradient(probs: &[f64], labels: &[u8], w_pos: f64, w_neg: f64) -> Vec<f64> {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if y == POSITIVE {
                w_pos * (p - 1.0) / n
            } else {
                w_neg * p / n
            }
        })
        .collect()
}

/// `C[actual][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix(pub [[f64; 2]; 2]);

/// Unit cost on the diagonal, `ir` off the diagonal.
pub fn fixed_cost_matrix(ir: f64) -> Result<CostMatrix> {
    if !(ir.is_finite() && ir > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "imbalance ratio must be positive, got {ir}"
        )));
    }
    Ok(CostMatrix([[1.0, ir], [ir, 1.0]]))
}

/// `R(i|S) = Σ_j P(j|S) · C(j, i)` for both decisions `i`.
pub fn expected_risk(posteriors: [f64; 2], cost: &CostMatrix) -> Result<[f64; 2]> {
    if posteriors.iter().any(|p| !p.is_finite() || *p < 0.0) || (posteriors[0] + posteriors[1] - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "posteriors {posteriors:?} are not a probability pair"
        )));
    }
    let c = &cost.0;
    Ok([0, 1].map(|i| posteriors[0] * c[0][i] + posteriors[1] * c[1][i]))
}
