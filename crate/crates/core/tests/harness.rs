use std::collections::{BTreeMap, BTreeSet};

use itsc_core::cost::{self, LambdaAssignment, LambdaState};
use itsc_core::data::{
    imbalance_ratio, synth_generate, zscore_fit, zscore_fit_transform, Dataset, SynthConfig, TimeSeriesSample,
};
use itsc_core::harness::{
    adaptive_batch_loss, evaluate, render_table, run_benchmark, run_cross_validation, train, BenchMatrix, Execution,
    ExperimentConfig, TableRow, TrainConfig, TrainMode,
};
use itsc_core::metrics::{self, MetricRecord};
use itsc_core::models::{build_model, predict, ModelKind};
use itsc_core::resample::{SamplerConfig, SamplerMethod};
use itsc_core::rng;
use rand::Rng;
use serde_json::json;

/// Two linearly separable classes: positives shifted by +1, negatives by −1.
fn separable(n_pos: usize, n_neg: usize, seed: u64) -> Dataset {
    let mut r = rng::rng(seed);
    let samples = (0..n_pos + n_neg)
        .map(|i| {
            let label = u8::from(i < n_pos);
            let shift = if label == 1 { 1.0 } else { -1.0 };
            TimeSeriesSample {
                values: (0..8).map(|_| shift + r.random_range(-0.5..0.5)).collect(),
                label,
                id: format!("s{i}"),
            }
        })
        .collect();
    Dataset::new(samples, 2, 4).unwrap()
}

fn normalized(d: &Dataset) -> Dataset {
    zscore_fit_transform(d).unwrap().0
}

fn mlp(seed: u64) -> itsc_core::models::Model {
    let o = BTreeMap::from([("hidden".to_string(), json!([8]))]);
    build_model(ModelKind::Mlp, (2, 4), &o, seed).unwrap()
}

fn synth(n_pos: usize, n_neg: usize, seed: u64) -> Dataset {
    synth_generate(&SynthConfig {
        n_pos,
        n_neg,
        channels: 2,
        length: 16,
        noise_std: 0.5,
        seed,
    })
    .unwrap()
}

fn small_cnn() -> BTreeMap<String, serde_json::Value> {
    BTreeMap::from([
        ("filters".to_string(), json!([4, 4])),
        ("kernels".to_string(), json!([3, 3])),
        ("dense_units".to_string(), json!(8)),
    ])
}

#[test]
fn single_full_batch_epoch_is_one_step() {
    let data = normalized(&separable(10, 30, 1));
    let mut cfg = TrainConfig::new(TrainMode::CostSensitive, 1);
    cfg.batch_size = 64;
    let (model, log) = train(mlp(0), &data, &cfg).unwrap();
    assert_eq!(log.batches.len(), 1);
    assert!(log.batches[0].lambda_minority.is_some());
    assert!(model.params().iter().all(|p| p.step_count == 1));
    assert_eq!(log.epoch_losses.len(), 1);
}

#[test]
fn plain_training_learns_a_separable_set() {
    let data = normalized(&separable(200, 200, 2));
    let mut cfg = TrainConfig::new(TrainMode::Plain, 40);
    cfg.adam.lr = 0.01;
    let (model, log) = train(mlp(3), &data, &cfg).unwrap();
    for w in log.epoch_losses[..5].windows(2) {
        assert!(w[1] < w[0], "loss did not decrease: {:?}", &log.epoch_losses[..5]);
    }
    let rec = evaluate(&model, &data, 0.5).unwrap();
    assert!(rec.acc.value().unwrap() >= 0.95, "acc {}", rec.acc);
}

#[test]
fn lambda_trajectory_respects_the_bound() {
    let data = normalized(&synth(12, 120, 4));
    let ir = imbalance_ratio(&data).unwrap();
    let mut cfg = TrainConfig::new(TrainMode::CostSensitive, 3);
    cfg.batch_size = 32;
    let model = build_model(ModelKind::Cnn, (2, 16), &small_cnn(), 5).unwrap();
    let (_, log) = train(model, &data, &cfg).unwrap();
    assert_eq!(log.ir_overall, Some(ir));
    assert_eq!(log.batches.len(), 3 * 132usize.div_ceil(32));
    for b in &log.batches {
        let l = b.lambda_minority.unwrap();
        assert!(l >= ir * (-1.0f64).exp() - 1e-12 && l <= ir + 1e-12, "λ = {l}");
    }
}

#[test]
fn cost_modes_reject_single_class_data() {
    let one_class = normalized(&separable(0, 20, 1).subset(&(0..20).collect::<Vec<_>>()));
    for mode in [TrainMode::CostSensitive, TrainMode::FixedCost] {
        assert!(train(mlp(0), &one_class, &TrainConfig::new(mode, 1)).is_err());
    }
    let raw = separable(5, 20, 1);
    assert!(train(mlp(0), &raw, &TrainConfig::new(TrainMode::Plain, 1)).is_err());
}

#[test]
fn config_validation() {
    let mut c = TrainConfig::new(TrainMode::Sampled, 1);
    assert!(c.validate().is_err());
    c.sampler = Some(SamplerConfig::new(SamplerMethod::Smote));
    assert!(c.validate().is_ok());
    c.mode = TrainMode::Plain;
    assert!(c.validate().is_err());
    let mut d = TrainConfig::new(TrainMode::Plain, 0);
    assert!(d.validate().is_err());
    d.epochs = 1;
    d.batch_size = 0;
    assert!(d.validate().is_err());
}

#[test]
fn zero_model_evaluation() {
    let data = normalized(&separable(5, 15, 6));
    let mut m = mlp(1);
    m.zero_params();
    let rec = evaluate(&m, &data, 0.5).unwrap();
    assert_eq!(rec.tnr.value(), Some(0.0));
    assert_eq!(rec.recall.value(), Some(1.0));
    assert_eq!(rec.roc_auc.value(), Some(0.5));
    assert_eq!(evaluate(&m, &data, 0.5).unwrap(), rec);
}

#[test]
fn evaluation_composes_metric_calls() {
    let data = normalized(&synth(10, 40, 7));
    let model = build_model(
        ModelKind::Fcn,
        (2, 16),
        &BTreeMap::from([("filters".to_string(), json!([3])), ("kernels".to_string(), json!([3]))]),
        2,
    )
    .unwrap();
    let rec = evaluate(&model, &data, 0.5).unwrap();
    let (scores, preds) = predict(&model, &data, 0.5).unwrap();
    let labels = data.labels();
    let sm = metrics::scalar_metrics(&metrics::confusion(&labels, &preds).unwrap());
    assert_eq!(rec.gmean, sm.gmean);
    assert_eq!(rec.f1, sm.f1);
    assert_eq!(rec.roc_auc, metrics::roc_auc(&labels, &scores).unwrap());
    assert_eq!(rec.pr_auc, metrics::pr_auc(&labels, &scores).unwrap());
    assert_eq!(rec, MetricRecord::from_scores(&labels, &scores, 0.5).unwrap());
}

#[test]
fn balanced_limit_matches_plain_class_balanced_loss() {
    let mut r = rng::rng(8);
    for _ in 0..200 {
        let n = r.random_range(2..64);
        let probs: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i == 0 || r.random_bool(0.2))).collect();
        let (loss, grad, state) =
            adaptive_batch_loss(&probs, &labels, 1.0, Some(0.0), 0.0, LambdaAssignment::Minority).unwrap();
        assert_eq!(state.lambda_minority, 1.0);
        let unit = LambdaState::unit();
        let plain: Vec<f64> = probs
            .iter()
            .zip(&labels)
            .map(|(&p, &y)| cost::weighted_bce(p, y, &unit))
            .collect();
        assert_eq!(
            loss.to_bits(),
            cost::class_balanced_loss(&plain, &labels).unwrap().to_bits()
        );
        assert_eq!(grad, cost::loss_gradient(&probs, &labels, &unit));
    }
}

#[test]
fn gradients_see_lambda_inputs_only_through_lambda() {
    let probs = [0.2, 0.7, 0.4, 0.9];
    let labels = [1, 0, 0, 1];
    let state = cost::update_lambda(12.0, Some(0.3), 0.6).unwrap();
    let mut other = state;
    other.gmean_batch = Some(0.9);
    other.acc_batch = 0.1;
    assert_eq!(
        cost::loss_gradient(&probs, &labels, &state),
        cost::loss_gradient(&probs, &labels, &other)
    );
}

#[test]
fn epoch_loss_change_scales_with_learning_rate() {
    let data = normalized(&separable(20, 20, 9));
    let change = |lr: f64| {
        let mut cfg = TrainConfig::new(TrainMode::Plain, 2);
        cfg.adam.lr = lr;
        let (_, log) = train(mlp(4), &data, &cfg).unwrap();
        (log.epoch_losses[1] - log.epoch_losses[0]).abs()
    };
    let (a, b) = (change(1e-5), change(1e-6));
    assert!(a > 0.0 && b > 0.0);
    let ratio = a / b;
    assert!((5.0..20.0).contains(&ratio), "ratio {ratio}");
}

fn experiment(mode: TrainMode, folds: usize, seed: u64) -> ExperimentConfig {
    let mut train = TrainConfig::new(mode, 2);
    train.batch_size = 16;
    train.seed = seed;
    if mode == TrainMode::Sampled {
        train.sampler = Some(SamplerConfig::new(SamplerMethod::Smote));
    }
    ExperimentConfig {
        model: ModelKind::Cnn,
        overrides: small_cnn(),
        train,
        folds,
    }
}

#[test]
fn two_fold_cv_trains_two_models_on_disjoint_splits() {
    let data = synth(6, 14, 10);
    let r = run_cross_validation(&data, &experiment(TrainMode::Plain, 2, 0), Execution::Serial).unwrap();
    assert_eq!(r.folds.len(), 2);
    let a: BTreeSet<_> = r.folds[0].validation_indices.iter().collect();
    let b: BTreeSet<_> = r.folds[1].validation_indices.iter().collect();
    assert!(a.is_disjoint(&b));
    assert_eq!(a.len() + b.len(), 20);
    assert_eq!(r.recompute_aggregates(), r.aggregates);
}

#[test]
fn resampling_and_normalization_stay_inside_training_folds() {
    let data = synth(15, 90, 11);
    let r = run_cross_validation(&data, &experiment(TrainMode::Sampled, 3, 0), Execution::Serial).unwrap();
    for f in &r.folds {
        assert_eq!(f.validation_ir, f.raw_validation_ir);
        let val: BTreeSet<usize> = f.validation_indices.iter().copied().collect();
        let train_idx: Vec<usize> = (0..data.len()).filter(|i| !val.contains(i)).collect();
        assert_eq!(f.norm_stats, zscore_fit(&data.subset(&train_idx)).unwrap());
        assert_eq!(f.trained_ir, Some(1.0));
        assert!(f.train_ir > 1.0);
    }
}

#[test]
fn cross_validation_is_deterministic_across_schedules() {
    let data = synth(10, 40, 12);
    let cfg = experiment(TrainMode::CostSensitive, 3, 5);
    let a = run_cross_validation(&data, &cfg, Execution::Parallel).unwrap();
    let b = run_cross_validation(&data, &cfg, Execution::Parallel).unwrap();
    assert_eq!(
        serde_json::to_string(&a.without_timing()).unwrap(),
        serde_json::to_string(&b.without_timing()).unwrap()
    );
    let s = run_cross_validation(&data, &cfg, Execution::Serial).unwrap();
    let metrics = |r: &itsc_core::harness::ExperimentReport| r.folds.iter().map(|f| f.metrics).collect::<Vec<_>>();
    assert_eq!(metrics(&a), metrics(&s));
}

#[test]
fn benchmark_cells_and_failures() {
    assert_eq!(BenchMatrix::full().cells().len(), 80);
    let data = synth(8, 24, 13);
    let matrix = BenchMatrix {
        models: vec![ModelKind::Cnn, ModelKind::Mlp],
        modes: vec![TrainMode::Plain, TrainMode::CostSensitive],
        samplers: vec![],
    };
    let mut base = TrainConfig::new(TrainMode::Plain, 1);
    base.batch_size = 16;
    let overrides = BTreeMap::from([
        (ModelKind::Cnn, small_cnn()),
        (ModelKind::Mlp, BTreeMap::from([("width".to_string(), json!(3))])),
    ]);
    let cells = run_benchmark(&data, &matrix, &base, &overrides, 2, Execution::Serial);
    assert_eq!(cells.len(), 4);
    let seeds: BTreeSet<u64> = cells.iter().map(|c| c.seed).collect();
    assert_eq!(seeds.len(), 4);
    for c in &cells {
        match c.model {
            ModelKind::Cnn => assert!(c.report.is_some() && c.error.is_none(), "{}", c.name),
            _ => assert!(c.report.is_none() && c.error.as_deref().unwrap().contains("width")),
        }
    }
    let rows: Vec<TableRow> = cells
        .iter()
        .map(|c| TableRow {
            name: c.name.clone(),
            aggregates: c
                .report
                .as_ref()
                .map(|r| r.aggregates.clone())
                .ok_or_else(|| c.error.clone().unwrap()),
        })
        .collect();
    let table = render_table(&rows);
    assert_eq!(table.lines().count(), 5);
    assert!(table.contains("cnn/cost_sensitive"));
    assert!(table.contains("failed"));
}

#[test]
fn table_renders_nan_and_marks_the_best() {
    use itsc_core::metrics::{aggregate_folds, MetricValue};
    let agg = |v: Option<f64>| {
        itsc_core::metrics::HEADLINE
            .iter()
            .map(|m| (m.to_string(), aggregate_folds(&[MetricValue(v), MetricValue(v)])))
            .collect::<BTreeMap<_, _>>()
    };
    let rows = vec![
        TableRow {
            name: "plain".into(),
            aggregates: Ok(agg(None)),
        },
        TableRow {
            name: "cost".into(),
            aggregates: Ok(agg(Some(0.75))),
        },
    ];
    let t = render_table(&rows);
    let plain = t.lines().find(|l| l.starts_with("plain")).unwrap();
    assert_eq!(plain.split_whitespace().filter(|w| *w == "nan").count(), 6);
    let cost = t.lines().find(|l| l.starts_with("cost")).unwrap();
    assert_eq!(cost.matches("0.7500 (0.0000)*").count(), 6);
}
