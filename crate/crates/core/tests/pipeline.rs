use yatt_core::genotype::cluster_genotypes;
use yatt_core::model::checkpoint::{from_bytes, to_bytes};
use yatt_core::model::{predict, train};
use yatt_core::pipeline::synthetic::{generate, SyntheticSpec};
use yatt_core::pipeline::{prepare, PrepareOptions, SplitName, Stratify};
use yatt_core::{Granularity, ModelConfig, ModelKind};

fn small_run(kind: ModelKind) -> (yatt_core::DatasetSplit, ModelConfig) {
    let spec = SyntheticSpec {
        locations: 6,
        years: 3,
        genotypes: 30,
        trials: 4,
        seed: 21,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec).unwrap();
    let clusters = cluster_genotypes(&data.correlation, 4, 1, 300, 1e-9).unwrap();
    let opts = PrepareOptions {
        granularity: Granularity::Biweekly,
        seed: 8,
        stratify: Stratify::Year,
    };
    let split = prepare(&data.performance, &data.weather, &clusters, opts).unwrap();
    let mut cfg = ModelConfig {
        kind,
        epochs: 3,
        batch_size: 8,
        learning_rate: 0.01,
        seed: 5,
        ..ModelConfig::default()
    };
    cfg.encoder.hidden1 = 6;
    cfg.encoder.hidden2 = 4;
    cfg.encoder.seq_len = Granularity::Biweekly.seq_len();
    cfg.sync_input_dim();
    (split, cfg)
}

#[test]
fn year_stratified_split_covers_every_record_once() {
    let (split, _) = small_run(ModelKind::Stacked);
    assert_eq!(split.len(), 72);
    assert_eq!(split.seq_len(), 15);
    let mut ids: Vec<&str> = [SplitName::Train, SplitName::Validation, SplitName::Test]
        .iter()
        .flat_map(|&n| split.get(n).iter().map(|s| s.record.record_id.as_str()))
        .collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 72);
    // 24 records per year cut 80/10/10 inside each year.
    for year in 2003..2006 {
        let count = |n: SplitName| split.get(n).iter().filter(|s| s.record.year == year).count();
        assert_eq!(count(SplitName::Train) + count(SplitName::Validation) + count(SplitName::Test), 24);
        assert!(count(SplitName::Test) >= 2);
    }
}

#[test]
fn checkpoint_roundtrip_preserves_predictions() {
    for kind in [ModelKind::Stacked, ModelKind::Attention] {
        let (split, cfg) = small_run(kind);
        let (weights, history) = train(&cfg, &split).unwrap();
        assert_eq!(history.epochs(), 3);
        let before = predict(&weights, &cfg, &split.test, &split.scaler).unwrap();
        assert!(before.iter().all(|p| p.is_finite()));

        let bytes = to_bytes(&weights, &cfg, &split.scaler).unwrap();
        let ck = from_bytes(&bytes, Some(kind)).unwrap();
        assert_eq!(ck.weights, weights);
        assert_eq!(predict(&ck.weights, &ck.config, &split.test, &ck.scaler).unwrap(), before);

        let other = if kind == ModelKind::Stacked { ModelKind::Attention } else { ModelKind::Stacked };
        assert!(from_bytes(&bytes, Some(other)).is_err());
    }
}

#[test]
fn training_is_reproducible() {
    let (split, cfg) = small_run(ModelKind::Attention);
    let a = train(&cfg, &split).unwrap();
    let b = train(&cfg, &split).unwrap();
    assert_eq!(a, b);
}
