use criterion::{black_box, criterion_group, criterion_main, Criterion};
use yatt_bench::{prepared, season, sparse_regression, uniform, vector};
use yatt_core::attention::{attend, AttentionParams};
use yatt_core::baselines::{flat_features, forest_fit, lasso_fit, ForestParams};
use yatt_core::genotype::kmeans;
use yatt_core::lstm::{cell_forward, stacked_encode, EncoderConfig, EncoderWeights, LstmCellWeights, LstmStepState, Mode};
use yatt_core::model::{build, mse_gradient};
use yatt_core::pipeline::downsample;
use yatt_core::{Granularity, ModelConfig, ModelKind};

fn lstm(c: &mut Criterion) {
    let mut r = yatt_bench::rng(1);
    let cell = LstmCellWeights::glorot(9, 128, &mut r);
    let prev = LstmStepState::zeros(128);
    let x = vector(9, 2);
    c.bench_function("cell_forward 9->128", |b| b.iter(|| cell_forward(&cell, &prev, black_box(&x)).unwrap()));

    let cfg = EncoderConfig::default();
    let weights = EncoderWeights::glorot(&cfg, &mut r);
    let seq = uniform(cfg.seq_len, cfg.input_dim, 3);
    c.bench_function("stacked_encode 30x9 128/50", |b| {
        b.iter(|| stacked_encode(&cfg, &weights, black_box(&seq), &mut Mode::Infer).unwrap())
    });

    let params = AttentionParams::glorot(50, &mut r);
    let annotations = uniform(30, 50, 4);
    c.bench_function("attend 30x50", |b| b.iter(|| attend(&params, black_box(&annotations)).unwrap()));
}

fn gradient(c: &mut Criterion) {
    let data = prepared(4, 5);
    for kind in [ModelKind::Stacked, ModelKind::Attention] {
        let mut cfg = ModelConfig {
            kind,
            ..ModelConfig::default()
        };
        cfg.sync_input_dim();
        let weights = build(&cfg, 6).unwrap();
        let batch: Vec<_> = data.train[..8].iter().map(|s| cfg.features(s).unwrap()).collect();
        let targets: Vec<f64> = data.train[..8].iter().map(|s| s.target).collect();
        c.bench_function(&format!("mse_gradient {kind} batch 8"), |b| {
            b.iter(|| mse_gradient(&weights, &cfg, black_box(&batch), &targets).unwrap())
        });
    }
}

fn data_kernels(c: &mut Criterion) {
    let s = season(7);
    c.bench_function("downsample weekly", |b| b.iter(|| downsample(black_box(&s), Granularity::Weekly).unwrap()));

    let points = uniform(300, 300, 8);
    c.bench_function("kmeans 300x300 k=20", |b| b.iter(|| kmeans(black_box(&points), 20, 9, 300, 1e-9).unwrap()));
}

fn baselines(c: &mut Criterion) {
    let (x, y) = sparse_regression(400, 212, 10);
    c.bench_function("lasso_fit 400x212", |b| b.iter(|| lasso_fit(black_box(&x), &y, 0.01, 1e-8, 10_000).unwrap()));

    let data = prepared(8, 11);
    let x = flat_features(&data.train, true, true).unwrap();
    let y: Vec<f64> = data.train.iter().map(|s| s.record.yield_bu_ac).collect();
    let params = ForestParams {
        n_trees: 10,
        ..ForestParams::default()
    };
    c.bench_function("forest_fit 10 trees", |b| {
        b.iter(|| forest_fit(black_box(&x), &y, &params, 12).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = lstm, gradient, data_kernels, baselines
}
criterion_main!(benches);
