//! Confusion-matrix accounting, scalar rates, ranking AUCs and fold
//! aggregation. A metric whose denominator is zero is `MetricValue(None)`,
//! serialized as `null` and rendered `nan`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::POSITIVE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricValue(pub Option<f64>);

impl MetricValue {
    pub const UNDEFINED: MetricValue = MetricValue(None);

    pub fn defined(v: f64) -> Self {
        MetricValue(Some(v))
    }

    pub fn value(&self) -> Option<f64> {
        self.0
    }

    pub fn is_undefined(&self) -> bool {
        self.0.is_none()
    }

    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            MetricValue::UNDEFINED
        } else {
            MetricValue::defined(num as f64 / den as f64)
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.4}"),
            None => f.write_str("nan"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub tpr: MetricValue,
    pub tnr: MetricValue,
    pub fpr: MetricValue,
    pub ppv: MetricValue,
    pub f1: MetricValue,
    pub gmean: MetricValue,
    pub acc: MetricValue,
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionCounts> {
    if labels.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut c = ConfusionCounts::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y == POSITIVE, p == POSITIVE) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
        }
    }
    Ok(c)
}

pub fn scalar_metrics(c: &ConfusionCounts) -> ScalarMetrics {
    let tpr = MetricValue::ratio(c.tp, c.tp + c.fn_);
    let tnr = MetricValue::ratio(c.tn, c.tn + c.fp);
    let fpr = MetricValue::ratio(c.fp, c.fp + c.tn);
    let ppv = MetricValue::ratio(c.tp, c.tp + c.fp);
    let f1 = match (ppv.0, tpr.0) {
        (Some(p), Some(r)) if p + r > 0.0 => MetricValue::defined(2.0 * p * r / (p + r)),
        _ => MetricValue::UNDEFINED,
    };
    let gmean = match (tpr.0, tnr.0) {
        (Some(r), Some(s)) => MetricValue::defined((r * s).sqrt()),
        _ => MetricValue::UNDEFINED,
    };
    let acc = MetricValue::ratio(c.tp + c.tn, c.total());
    ScalarMetrics {
        tpr,
        tnr,
        fpr,
        ppv,
        f1,
        gmean,
        acc,
    }
}

fn check_scores(labels: &[u8], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    Ok(())
}

/// ROC AUC as the Mann–Whitney statistic with average ranks for ties.
/// Undefined unless both classes are present.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<MetricValue> {
    check_scores(labels, scores)?;
    let n_pos = labels.iter().filter(|&&y| y == POSITIVE).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(MetricValue::UNDEFINED);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == POSITIVE).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(MetricValue::defined((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n)))
}

/// Average precision: `Σ (R_k − R_{k−1}) · P_k` over the descending distinct
/// score thresholds. Samples sharing a score enter together. Undefined
/// without positives.
pub fn pr_auc(labels: &[u8], scores: &[f64]) -> Result<MetricValue> {
    check_scores(labels, scores)?;
    let n_pos = labels.iter().filter(|&&y| y == POSITIVE).count();
    if n_pos == 0 {
        return Ok(MetricValue::UNDEFINED);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            tp += usize::from(labels[order[j]] == POSITIVE);
            j += 1;
        }
        seen = j;
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    debug_assert_eq!(seen, order.len());
    Ok(MetricValue::defined(ap))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: MetricValue,
    pub std: MetricValue,
    pub undefined_count: usize,
}

/// Mean and population standard deviation over defined fold values.
pub fn aggregate_folds(values: &[MetricValue]) -> Aggregate {
    let defined: Vec<f64> = values.iter().filter_map(|v| v.0).collect();
    let undefined_count = values.len() - defined.len();
    if defined.is_empty() {
        return Aggregate {
            mean: MetricValue::UNDEFINED,
            std: MetricValue::UNDEFINED,
            undefined_count,
        };
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Aggregate {
        mean: MetricValue::defined(mean),
        std: MetricValue::defined(var.sqrt()),
        undefined_count,
    }
}

/// Every metric reported for one evaluated split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub confusion: ConfusionCounts,
    pub recall: MetricValue,
    pub precision: MetricValue,
    pub f1: MetricValue,
    pub gmean: MetricValue,
    pub roc_auc: MetricValue,
    pub pr_auc: MetricValue,
    pub tnr: MetricValue,
    pub fpr: MetricValue,
    pub acc: MetricValue,
}

/// The six headline metrics, in table order.
pub const HEADLINE: [&str; 6] = ["recall", "precision", "f1", "gmean", "roc_auc", "pr_auc"];

impl MetricRecord {
    pub fn from_scores(labels: &[u8], scores: &[f64], threshold: f64) -> Result<Self> {
        let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s >= threshold)).collect();
        let confusion = confusion(labels, &preds)?;
        let m = scalar_metrics(&confusion);
        Ok(MetricRecord {
            confusion,
            recall: m.tpr,
            precision: m.ppv,
            f1: m.f1,
            gmean: m.gmean,
            roc_auc: roc_auc(labels, scores)?,
            pr_auc: pr_auc(labels, scores)?,
            tnr: m.tnr,
            fpr: m.fpr,
            acc: m.acc,
        })
    }

    /// `(name, value)` for every scalar metric.
    pub fn named(&self) -> [(&'static str, MetricValue); 9] {
        [
            ("recall", self.recall),
            ("precision", self.precision),
            ("f1", self.f1),
            ("gmean", self.gmean),
            ("roc_auc", self.roc_auc),
            ("pr_auc", self.pr_auc),
            ("tnr", self.tnr),
            ("fpr", self.fpr),
            ("acc", self.acc),
        ]
    }

    pub fn get(&self, name: &str) -> Option<MetricValue> {
        self.named().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }
}
