//! Synthetic stand-in for the trial records: weather, genotypes and yields
//! with known structure.
//!
//! Yield is the sum of a maturity-group effect, a genotype-family effect, a
//! weather effect driven only by weekly MinSur and ADNI in weeks 18–26
//! (zero-based weekly steps), and Gaussian noise. The total is calibrated to
//! a fixed marginal mean and standard deviation.

use std::collections::BTreeMap;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::CorrelationMatrix;
use crate::numcore::Matrix;
use crate::pipeline::{downsample, Granularity, PerformanceRecord, WeatherSeries, WeatherStore, WeatherVar, N_WEATHER, SEASON_DAYS};
use crate::rng::{derive_seed, seeded, SeededRng};

/// Weekly steps carrying the planted weather signal.
pub const SIGNAL_WEEKS: RangeInclusive<usize> = 18..=26;
pub const TARGET_MEAN: f64 = 50.745;
pub const TARGET_STD: f64 = 16.019;

const MG_STD: f64 = 5.0;
const CLUSTER_STD: f64 = 4.0;
const WEATHER_STD: f64 = 10.0;
const NOISE_STD: f64 = 5.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub locations: usize,
    pub years: usize,
    pub genotypes: usize,
    /// Records per (location, year).
    pub trials: usize,
    pub families: usize,
    pub first_year: i32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            locations: 100,
            years: 10,
            genotypes: 300,
            trials: 5,
            families: 5,
            first_year: 2003,
            seed: 0,
        }
    }
}

/// Additive yield components of one record, in bu/acre, before rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldTruth {
    pub record_id: String,
    pub mg_effect: f64,
    pub cluster_effect: f64,
    pub weather_effect: f64,
    pub noise: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub performance: Vec<PerformanceRecord>,
    pub weather: WeatherStore,
    pub correlation: CorrelationMatrix,
    /// Planted family of each genotype, keyed by id.
    pub families: BTreeMap<String, usize>,
    pub truth: Vec<YieldTruth>,
    /// Yield = base + the four components (before clamping and rounding).
    pub base: f64,
}

fn quantize(x: f64, decimals: usize) -> f64 {
    format!("{x:.decimals$}").parse().expect("formatted float parses")
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn standardize(values: &mut [f64], target_std: f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let s = if sd > 0.0 { target_std / sd } else { 0.0 };
    values.iter_mut().for_each(|v| *v = (*v - mean) * s);
}

/// Weather contribution of one (location, year) before standardization.
fn raw_weather_effect(weekly: &Matrix) -> f64 {
    SIGNAL_WEEKS
        .map(|w| {
            let row = weekly.row(w);
            let night = row[WeatherVar::MinSur.index()];
            let light = row[WeatherVar::Adni.index()];
            -softplus((night - 10.0) / 1.5) + 0.8 * ((light - 225.0) / 35.0).tanh()
        })
        .sum()
}

fn season(rng: &mut SeededRng, location_id: &str, year: i32, latitude: f64, year_anomaly: f64) -> WeatherSeries {
    let std = |s: f64| Normal::new(0.0, s).expect("positive std");
    let weeks = SEASON_DAYS.div_ceil(7);
    let heat: Vec<f64> = (0..weeks).map(|_| std(2.0).sample(rng)).collect();
    let nights: Vec<f64> = (0..weeks).map(|_| std(1.5).sample(rng)).collect();
    let clouds: Vec<f64> = (0..weeks).map(|_| std(25.0).sample(rng)).collect();
    let wet: Vec<f64> = (0..weeks).map(|_| std(0.1).sample(rng)).collect();
    let local = year_anomaly + std(0.8).sample(rng);
    let rain = Exp::new(1.0 / 0.35).expect("positive rate");
    let tau = std::f64::consts::TAU;

    let days = (0..SEASON_DAYS)
        .map(|d| {
            let w = d / 7;
            let df = d as f64;
            let avg = 14.0 + 9.0 * (tau * (df - 110.0) / 365.0).cos() - 6.0 * latitude + local + heat[w] + std(1.0).sample(rng);
            let low_gap = (5.0 + std(1.0).sample(rng) - nights[w]).max(0.5);
            let high_gap = (5.0 + std(1.0).sample(rng)).max(0.5);
            let adni = (220.0 + 80.0 * (tau * (df - 81.0) / 365.0).cos() - 30.0 * latitude + clouds[w] + std(20.0).sample(rng)).max(5.0);
            let mdni = adni * (1.6 + 0.4 * rng.gen::<f64>());
            let p_rain = (0.3 + wet[w]).clamp(0.05, 0.8);
            let ap = if rng.gen::<f64>() < p_rain { rain.sample(rng) } else { 0.0 };
            let arh = (65.0 - 0.8 * (avg - 18.0) + 60.0 * wet[w] + if ap > 0.0 { 8.0 } else { 0.0 } + std(4.0).sample(rng)).clamp(5.0, 100.0);
            let mut row = [0.0; N_WEATHER];
            row[WeatherVar::Adni.index()] = quantize(adni, 4);
            row[WeatherVar::Ap.index()] = quantize(ap, 4);
            row[WeatherVar::Arh.index()] = quantize(arh, 4);
            row[WeatherVar::Mdni.index()] = quantize(mdni, 4);
            row[WeatherVar::MaxSur.index()] = quantize(avg + high_gap, 4);
            row[WeatherVar::MinSur.index()] = quantize(avg - low_gap, 4);
            row[WeatherVar::AvgSur.index()] = quantize(avg, 4);
            row
        })
        .collect();
    WeatherSeries {
        location_id: location_id.to_string(),
        year,
        days,
    }
}

fn family_effects(families: usize, rng: &mut SeededRng) -> Vec<f64> {
    const FIXED: [f64; 5] = [1.0, -1.2, 0.3, 1.5, -1.6];
    (0..families)
        .map(|f| FIXED.get(f).copied().unwrap_or_else(|| Normal::new(0.0, 1.0).expect("unit normal").sample(rng)))
        .collect()
}

/// Draws a full synthetic dataset. Output depends only on `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.locations == 0 || spec.years == 0 || spec.genotypes == 0 || spec.trials == 0 || spec.families == 0 {
        return Err(Error::Config("synthetic counts must all be positive".into()));
    }
    if spec.families > spec.genotypes {
        return Err(Error::Config(format!("{} families need at least as many genotypes", spec.families)));
    }

    let mut geno_rng = seeded(derive_seed(spec.seed, "synthetic/genotypes"));
    let genotype_ids: Vec<String> = (0..spec.genotypes).map(|g| format!("G{:04}", g + 1)).collect();
    let genotype_mg: Vec<u8> = (0..spec.genotypes).map(|_| geno_rng.gen_range(0..=8)).collect();
    let genotype_family: Vec<usize> = (0..spec.genotypes).map(|g| g % spec.families).collect();
    let effects = family_effects(spec.families, &mut geno_rng);

    let n = spec.genotypes;
    let mut corr = Matrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let base = if genotype_family[i] == genotype_family[j] { 0.9 } else { 0.1 };
            let v = quantize(base + geno_rng.gen_range(-0.02..0.02), 6);
            corr.set(i, j, v);
            corr.set(j, i, v);
        }
    }
    let correlation = CorrelationMatrix::new(genotype_ids.clone(), corr)?;

    let mut weather_rng = seeded(derive_seed(spec.seed, "synthetic/weather"));
    let year_anomaly: Vec<f64> = (0..spec.years)
        .map(|_| Normal::new(0.0, 1.2).expect("positive std").sample(&mut weather_rng))
        .collect();
    let mut weather = WeatherStore::new();
    let mut locations = Vec::with_capacity(spec.locations);
    for l in 0..spec.locations {
        let id = format!("L{:03}", l + 1);
        let latitude = (l as f64 + 0.5) / spec.locations as f64;
        let best_mg = (8.0 * (1.0 - latitude)).round() as i32;
        for (y, anomaly) in year_anomaly.iter().enumerate() {
            let year = spec.first_year + y as i32;
            let series = season(&mut weather_rng, &id, year, latitude, *anomaly);
            series.validate()?;
            weather.insert((id.clone(), year), series);
        }
        locations.push((id, best_mg));
    }

    let mut trial_rng = seeded(derive_seed(spec.seed, "synthetic/trials"));
    let mut records = Vec::with_capacity(spec.locations * spec.years * spec.trials);
    let mut raw_mg = Vec::with_capacity(records.capacity());
    let mut raw_cluster = Vec::with_capacity(records.capacity());
    let mut raw_weather = Vec::with_capacity(records.capacity());
    for (loc, best_mg) in &locations {
        let mut candidates: Vec<usize> = (0..n).filter(|&g| (genotype_mg[g] as i32 - best_mg).abs() <= 1).collect();
        if candidates.is_empty() {
            candidates = (0..n).collect();
        }
        for y in 0..spec.years {
            let year = spec.first_year + y as i32;
            let weekly = downsample(&weather[&(loc.clone(), year)], Granularity::Weekly)?;
            let w_effect = raw_weather_effect(&weekly);
            for _ in 0..spec.trials {
                let g = candidates[trial_rng.gen_range(0..candidates.len())];
                records.push(PerformanceRecord {
                    record_id: format!("r{:06}", records.len() + 1),
                    year,
                    location_id: loc.clone(),
                    genotype_id: genotype_ids[g].clone(),
                    maturity_group: genotype_mg[g],
                    yield_bu_ac: 0.0,
                });
                raw_mg.push(-(genotype_mg[g] as f64 - 5.0).powi(2));
                raw_cluster.push(effects[genotype_family[g]]);
                raw_weather.push(w_effect);
            }
        }
    }

    standardize(&mut raw_mg, MG_STD);
    standardize(&mut raw_cluster, CLUSTER_STD);
    standardize(&mut raw_weather, WEATHER_STD);
    let noise_dist = Normal::new(0.0, NOISE_STD).expect("positive std");
    let mut noise: Vec<f64> = (0..records.len()).map(|_| noise_dist.sample(&mut trial_rng)).collect();
    let noise_mean = noise.iter().sum::<f64>() / noise.len() as f64;
    noise.iter_mut().for_each(|v| *v -= noise_mean);

    let total: Vec<f64> = (0..records.len()).map(|i| raw_mg[i] + raw_cluster[i] + raw_weather[i] + noise[i]).collect();
    let sd = (total.iter().map(|v| v * v).sum::<f64>() / total.len() as f64).sqrt();
    let factor = if sd > 0.0 { TARGET_STD / sd } else { 1.0 };

    let mut truth = Vec::with_capacity(records.len());
    for (i, r) in records.iter_mut().enumerate() {
        r.yield_bu_ac = quantize((TARGET_MEAN + factor * total[i]).max(1.0), 2);
        truth.push(YieldTruth {
            record_id: r.record_id.clone(),
            mg_effect: factor * raw_mg[i],
            cluster_effect: factor * raw_cluster[i],
            weather_effect: factor * raw_weather[i],
            noise: factor * noise[i],
        });
    }

    Ok(SyntheticData {
        performance: records,
        weather,
        correlation,
        families: genotype_ids.into_iter().zip(genotype_family).collect(),
        truth,
        base: TARGET_MEAN,
    })
}

impl SyntheticData {
    pub fn performance_csv(&self) -> String {
        let mut out = String::from("record_id,year,location_id,genotype_id,maturity_group,yield_bu_ac\n");
        for r in &self.performance {
            out.push_str(&format!(
                "{},{},{},{},{},{:.2}\n",
                r.record_id, r.year, r.location_id, r.genotype_id, r.maturity_group, r.yield_bu_ac
            ));
        }
        out
    }

    pub fn weather_csv(&self) -> String {
        let mut out = String::from("location_id,year,day_index");
        for v in WeatherVar::ALL {
            out.push(',');
            out.push_str(v.name());
        }
        out.push('\n');
        for ((loc, year), series) in &self.weather {
            for (d, row) in series.days.iter().enumerate() {
                out.push_str(&format!("{loc},{year},{d}"));
                for v in row {
                    out.push_str(&format!(",{v:.4}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn truth_csv(&self) -> String {
        let mut out = String::from("record_id,mg_effect,cluster_effect,weather_effect,noise\n");
        for t in &self.truth {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                t.record_id, t.mg_effect, t.cluster_effect, t.weather_effect, t.noise
            ));
        }
        out
    }

    /// Writes performance.csv, weather.csv, correlation.csv and truth.csv into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("performance.csv", self.performance_csv()),
            ("weather.csv", self.weather_csv()),
            ("correlation.csv", self.correlation.to_csv()),
            ("truth.csv", self.truth_csv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{parse_performance, parse_weather};

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            locations: 6,
            years: 3,
            genotypes: 40,
            trials: 4,
            families: 5,
            first_year: 2010,
            seed: 7,
        }
    }

    #[test]
    fn counts_and_ids() {
        let data = generate(&small()).unwrap();
        assert_eq!(data.performance.len(), 6 * 3 * 4);
        assert_eq!(data.weather.len(), 18);
        assert_eq!(data.correlation.len(), 40);
        assert!(data.performance.iter().all(|r| r.maturity_group <= 8 && r.yield_bu_ac > 0.0));
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.performance_csv(), b.performance_csv());
        assert_eq!(a.weather_csv(), b.weather_csv());
        assert_eq!(a.correlation.to_csv(), b.correlation.to_csv());
        let c = generate(&SyntheticSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a.performance_csv(), c.performance_csv());
    }

    #[test]
    fn written_files_parse_back_exactly() {
        let data = generate(&small()).unwrap();
        let (records, skips) = parse_performance(data.performance_csv().as_bytes(), Path::new("p.csv")).unwrap();
        assert!(skips.is_empty());
        assert_eq!(records, data.performance);
        let weather = parse_weather(data.weather_csv().as_bytes(), Path::new("w.csv")).unwrap();
        assert_eq!(weather, data.weather);
        let corr = CorrelationMatrix::parse(data.correlation.to_csv().as_bytes(), Path::new("c.csv")).unwrap();
        assert_eq!(corr, data.correlation);
    }

    #[test]
    fn components_sum_to_the_yield() {
        let data = generate(&small()).unwrap();
        for (r, t) in data.performance.iter().zip(&data.truth) {
            let y = data.base + t.mg_effect + t.cluster_effect + t.weather_effect + t.noise;
            assert!((r.yield_bu_ac - y.max(1.0)).abs() <= 0.005 + 1e-9);
        }
    }

    #[test]
    fn calibrated_marginals() {
        let data = generate(&SyntheticSpec { seed: 3, ..SyntheticSpec::default() }).unwrap();
        let y: Vec<f64> = data.performance.iter().map(|r| r.yield_bu_ac).collect();
        assert!(y.len() >= 5000);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        assert!((mean - 50.7).abs() <= 1.5, "{mean}");
        assert!((sd - 16.0).abs() <= 2.0, "{sd}");
    }
}
