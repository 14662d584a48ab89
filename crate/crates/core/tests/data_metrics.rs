use itsc_core::data::{
    imbalance_ratio, load_csv, stratified_kfold, synth_generate, write_csv, zscore_apply, zscore_fit_transform,
    CsvSchema, SynthConfig,
};
use itsc_core::metrics::{aggregate_folds, pr_auc, roc_auc, MetricRecord, MetricValue};
use proptest::prelude::*;

fn synth(n_pos: usize, n_neg: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_pos,
        n_neg,
        channels: 2,
        length: 7,
        noise_std: 1.3,
        seed,
    }
}

fn scored() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..=1, n),
            prop::collection::vec(prop::sample::select(vec![0.0, 0.1, 0.25, 0.5, 0.7, 0.9, 1.0]), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_preserves_generated_data(n_pos in 1usize..8, n_neg in 1usize..20, seed: u64) {
        let data = synth_generate(&synth(n_pos, n_neg, seed)).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        write_csv(file.path(), &data).unwrap();
        prop_assert_eq!(load_csv(file.path(), &CsvSchema::default()).unwrap(), data);
    }

    #[test]
    fn stratified_folds_keep_the_class_ratio(n_pos in 10usize..30, n_neg in 30usize..120, k in 2usize..6, seed: u64) {
        let data = synth_generate(&synth(n_pos, n_neg, seed)).unwrap();
        let folds = stratified_kfold(&data, k, seed).unwrap();
        let mut seen = vec![0usize; data.len()];
        for f in &folds {
            for &i in &f.validation_indices {
                seen[i] += 1;
            }
            let (p, _) = data.subset(&f.validation_indices).class_counts();
            prop_assert!(p == n_pos / k || p == n_pos.div_ceil(k));
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn roc_auc_is_rank_based((labels, scores) in scored()) {
        let a = roc_auc(&labels, &scores).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0f64).exp()).collect();
        prop_assert_eq!(a, roc_auc(&labels, &squashed).unwrap());
        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        let b = roc_auc(&flipped, &scores).unwrap();
        match (a.0, b.0) {
            (Some(x), Some(y)) => prop_assert!((x + y - 1.0).abs() < 1e-12),
            (x, y) => prop_assert!(x.is_none() && y.is_none()),
        }
    }

    #[test]
    fn pr_auc_lies_in_the_unit_interval((labels, scores) in scored()) {
        match pr_auc(&labels, &scores).unwrap().0 {
            Some(ap) => prop_assert!((0.0..=1.0 + 1e-12).contains(&ap)),
            None => prop_assert!(labels.iter().all(|&y| y == 0)),
        }
    }

    #[test]
    fn aggregate_is_population_mean_and_std(vals in prop::collection::vec(prop::option::of(0.0f64..1.0), 1..12)) {
        let values: Vec<MetricValue> = vals.iter().map(|v| MetricValue(*v)).collect();
        let a = aggregate_folds(&values);
        let d: Vec<f64> = vals.iter().flatten().copied().collect();
        prop_assert_eq!(a.undefined_count, vals.len() - d.len());
        if d.is_empty() {
            prop_assert!(a.mean.is_undefined() && a.std.is_undefined());
        } else {
            let m = d.iter().sum::<f64>() / d.len() as f64;
            let s = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
            prop_assert!((a.mean.0.unwrap() - m).abs() < 1e-12);
            prop_assert!((a.std.0.unwrap() - s).abs() < 1e-12);
        }
    }
}

#[test]
fn normalization_uses_train_statistics_only() {
    let data = synth_generate(&synth(10, 50, 3)).unwrap();
    let folds = stratified_kfold(&data, 3, 3).unwrap();
    let f = &folds[0];
    let (train, stats) = zscore_fit_transform(&data.subset(&f.train_indices)).unwrap();
    let val = zscore_apply(&data.subset(&f.validation_indices), &stats).unwrap();
    assert_eq!(stats.fitted_on, f.train_indices.len());
    assert_eq!(train.stats(), Some(&stats));
    assert_eq!(val.stats(), Some(&stats));
    assert_eq!(
        imbalance_ratio(&val).unwrap(),
        imbalance_ratio(&data.subset(&f.validation_indices)).unwrap()
    );
}

#[test]
fn undefined_metrics_serialize_as_null() {
    let r = MetricRecord::from_scores(&[1, 0, 0], &[0.1, 0.2, 0.3], 0.5).unwrap();
    assert!(r.precision.is_undefined() && r.f1.is_undefined());
    let v = serde_json::to_value(r).unwrap();
    assert!(v["precision"].is_null());
    assert_eq!(r.precision.to_string(), "nan");
    let back: MetricRecord = serde_json::from_value(v).unwrap();
    assert_eq!(back, r);
}
