//! Seeded fixtures shared by the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yatt_core::genotype::cluster_genotypes;
use yatt_core::pipeline::synthetic::{generate, SyntheticSpec};
use yatt_core::pipeline::{prepare, PrepareOptions, Stratify, SEASON_DAYS};
use yatt_core::{DatasetSplit, Granularity, Matrix, WeatherSeries};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn vector(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// One season of plausible daily weather.
pub fn season(seed: u64) -> WeatherSeries {
    let mut r = rng(seed);
    let days = (0..SEASON_DAYS)
        .map(|_| {
            let adni = r.gen_range(100.0..700.0);
            let min = r.gen_range(0.0..18.0);
            let max = min + r.gen_range(2.0..14.0);
            [adni, r.gen_range(0.0..2.0), r.gen_range(30.0..95.0), adni + r.gen_range(0.0..200.0), max, min, 0.5 * (min + max)]
        })
        .collect();
    WeatherSeries {
        location_id: "L1".into(),
        year: 2010,
        days,
    }
}

/// Weekly split over a small synthetic trial set.
pub fn prepared(locations: usize, seed: u64) -> DatasetSplit {
    let spec = SyntheticSpec {
        locations,
        years: 2,
        genotypes: 40,
        trials: 4,
        seed,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec).unwrap();
    let clusters = cluster_genotypes(&data.correlation, 5, seed, 300, 1e-9).unwrap();
    let opts = PrepareOptions {
        granularity: Granularity::Weekly,
        seed,
        stratify: Stratify::None,
    };
    prepare(&data.performance, &data.weather, &clusters, opts).unwrap()
}

/// Regression problem with a sparse linear truth plus noise.
pub fn sparse_regression(n: usize, p: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let x = uniform(n, p, seed);
    let mut r = rng(seed ^ 0x5eed);
    let beta: Vec<f64> = (0..p).map(|j| if j % 4 == 0 { r.gen_range(-2.0..2.0) } else { 0.0 }).collect();
    let y = (0..n)
        .map(|i| x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + 0.1 * r.gen_range(-1.0..1.0))
        .collect();
    (x, y)
}
