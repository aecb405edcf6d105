//! Metrics and the analysis tables: input ablation, year-wise error,
//! attention distributions and the data-availability heatmap.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::attention::AttentionMap;
use crate::error::{Error, Result};
use crate::model::{predict, train, ModelConfig, ModelKind};
use crate::pipeline::{DatasetSplit, PerformanceRecord, Sample, SplitName};
use crate::rng::derive_seed;

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != actual.len() {
        return Err(Error::shape("metric", format!("{} predictions", pred.len()), format!("{} actual values", actual.len())));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let sum: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// `1 − SS_res / SS_tot`; undefined when the actual values are constant.
pub fn r2(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Data("R² is undefined for constant actual values".into()));
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub split: String,
    pub n: usize,
    /// bu/acre.
    pub rmse: f64,
    pub r2: Option<f64>,
}

impl MetricReport {
    pub fn new(model: &str, split: &str, pred: &[f64], actual: &[f64]) -> Result<Self> {
        Ok(MetricReport {
            model: model.to_string(),
            split: split.to_string(),
            n: pred.len(),
            rmse: rmse(pred, actual)?,
            r2: r2(pred, actual).ok(),
        })
    }
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|v| format!("{v:.decimals$}")).unwrap_or_else(|| "NA".into())
}

pub fn metrics_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("model,split,n,rmse,r2\n");
    for r in reports {
        out.push_str(&format!("{},{},{},{:.3},{}\n", r.model, r.split, r.n, r.rmse, fmt_opt(r.r2, 3)));
    }
    out
}

/// Metrics for one trained model on one split.
pub fn evaluate_split(model_id: &str, weights: &crate::model::ModelWeights, cfg: &ModelConfig, data: &DatasetSplit, split: SplitName) -> Result<(MetricReport, Vec<f64>)> {
    let samples = data.get(split);
    let pred = predict(weights, cfg, samples, &data.scaler)?;
    let actual: Vec<f64> = samples.iter().map(|s| s.record.yield_bu_ac).collect();
    Ok((MetricReport::new(model_id, split.as_str(), &pred, &actual)?, pred))
}

/// Input combinations compared in the ablation, in table order.
pub const ABLATION_ROWS: [(&str, bool, bool, bool); 7] = [
    ("MG", true, false, false),
    ("Cluster", false, true, false),
    ("Weather Variables", false, false, true),
    ("MG & Cluster", true, true, false),
    ("MG & Weather Variables", true, false, true),
    ("Cluster & Weather Variables", false, true, true),
    ("MG, Cluster & Weather Variables", true, true, true),
];

/// `base` with the given inputs switched on and the encoder width synced.
pub fn ablation_config(base: &ModelConfig, use_mg: bool, use_cluster: bool, use_weather: bool) -> ModelConfig {
    let mut cfg = base.clone();
    cfg.kind = ModelKind::Stacked;
    cfg.use_mg = use_mg;
    cfg.use_cluster = use_cluster;
    cfg.use_weather = use_weather;
    cfg.sync_input_dim();
    cfg
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub input_dim: usize,
    /// Test metrics averaged over seeds.
    pub rmse: f64,
    pub r2: Option<f64>,
    pub seeds: usize,
}

/// Trains the stacked model on each input combination for every seed and
/// reports mean test RMSE and R².
pub fn ablation_grid(base: &ModelConfig, data: &DatasetSplit, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(ABLATION_ROWS.len());
    for (label, mg, cluster, weather) in ABLATION_ROWS {
        let mut cfg = ablation_config(base, mg, cluster, weather);
        let mut rmses = Vec::new();
        let mut r2s = Vec::new();
        for &seed in seeds {
            cfg.seed = derive_seed(seed, &format!("ablation/{label}"));
            let (weights, _) = train(&cfg, data)?;
            let (report, _) = evaluate_split(label, &weights, &cfg, data, SplitName::Test)?;
            log::info!("ablation {label} seed {seed}: RMSE {:.3}", report.rmse);
            rmses.push(report.rmse);
            r2s.push(report.r2);
        }
        let k = seeds.len() as f64;
        rows.push(AblationRow {
            label: label.to_string(),
            input_dim: cfg.encoder.input_dim,
            rmse: rmses.iter().sum::<f64>() / k,
            r2: r2s.iter().copied().sum::<Option<f64>>().map(|s| s / k),
            seeds: seeds.len(),
        });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("inputs,input_dim,seeds,test_rmse,test_r2\n");
    for r in rows {
        out.push_str(&format!("\"{}\",{},{},{:.3},{}\n", r.label, r.input_dim, r.seeds, r.rmse, fmt_opt(r.r2, 3)));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearError {
    pub year: i32,
    pub n: usize,
    pub mean_predicted: f64,
    pub mean_actual: f64,
    /// `|mean(pred) − mean(actual)|`.
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct YearwiseTable {
    pub rows: Vec<YearError>,
    /// Requested years that had no records.
    pub omitted: Vec<i32>,
}

/// Per-year absolute difference between mean prediction and mean actual yield.
pub fn yearwise_abs_error(records: &[PerformanceRecord], pred: &[f64], years: &[i32]) -> Result<YearwiseTable> {
    if records.len() != pred.len() {
        return Err(Error::shape("yearwise_abs_error", records.len(), pred.len()));
    }
    let mut by_year: BTreeMap<i32, (usize, f64, f64)> = BTreeMap::new();
    for (r, p) in records.iter().zip(pred) {
        let e = by_year.entry(r.year).or_default();
        e.0 += 1;
        e.1 += p;
        e.2 += r.yield_bu_ac;
    }
    let rows = by_year
        .iter()
        .map(|(&year, &(n, sp, sa))| {
            let (mp, ma) = (sp / n as f64, sa / n as f64);
            YearError {
                year,
                n,
                mean_predicted: mp,
                mean_actual: ma,
                abs_error: (mp - ma).abs(),
            }
        })
        .collect();
    let omitted: Vec<i32> = years.iter().copied().filter(|y| !by_year.contains_key(y)).collect::<BTreeSet<_>>().into_iter().collect();
    for y in &omitted {
        log::warn!("year {y} has no test records; omitted from the year-wise table");
    }
    Ok(YearwiseTable { rows, omitted })
}

pub fn yearwise_csv(table: &YearwiseTable) -> String {
    let mut out = String::from("year,n,mean_predicted,mean_actual,abs_error\n");
    for r in &table.rows {
        out.push_str(&format!("{},{},{:.3},{:.3},{:.3}\n", r.year, r.n, r.mean_predicted, r.mean_actual, r.abs_error));
    }
    out
}

/// Mean attention curve of one (MG, yield band) group.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGroup {
    pub maturity_group: u8,
    pub band: usize,
    pub yield_lo: f64,
    pub yield_hi: f64,
    pub count: usize,
    /// `None` for an empty group.
    pub curve: Option<Vec<f64>>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Groups records by MG and by actual-yield band (`bands` equal-count
/// quantile bands per MG) and averages their attention maps per step.
///
/// With `mg_filter`, exactly those MGs are reported, including empty ones.
pub fn attention_distribution(maps: &[AttentionMap], records: &[PerformanceRecord], mg_filter: Option<&[u8]>, bands: usize) -> Result<Vec<AttentionGroup>> {
    if bands == 0 {
        return Err(Error::Config("need at least one yield band".into()));
    }
    let by_id: BTreeMap<&str, &AttentionMap> = maps.iter().map(|m| (m.record_id.as_str(), m)).collect();
    let steps = maps.first().map_or(0, |m| m.weights.len());
    let mut per_mg: BTreeMap<u8, Vec<(&PerformanceRecord, &AttentionMap)>> = BTreeMap::new();
    for r in records {
        let m = by_id
            .get(r.record_id.as_str())
            .ok_or_else(|| Error::Data(format!("no attention map for record {}", r.record_id)))?;
        if m.weights.len() != steps {
            return Err(Error::shape("attention_distribution", steps, m.weights.len()));
        }
        per_mg.entry(r.maturity_group).or_default().push((r, m));
    }
    let mgs: Vec<u8> = match mg_filter {
        Some(f) => f.iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
        None => per_mg.keys().copied().collect(),
    };

    let mut out = Vec::new();
    for mg in mgs {
        let members = per_mg.get(&mg).map(Vec::as_slice).unwrap_or(&[]);
        if members.is_empty() {
            for band in 0..bands {
                out.push(AttentionGroup {
                    maturity_group: mg,
                    band,
                    yield_lo: f64::NAN,
                    yield_hi: f64::NAN,
                    count: 0,
                    curve: None,
                });
            }
            continue;
        }
        let mut ys: Vec<f64> = members.iter().map(|(r, _)| r.yield_bu_ac).collect();
        ys.sort_by(f64::total_cmp);
        let edges: Vec<f64> = (0..=bands).map(|k| quantile(&ys, k as f64 / bands as f64)).collect();
        let band_of = |y: f64| (1..bands).filter(|&k| y > edges[k]).count();
        let mut sums = vec![(0usize, vec![0.0; steps]); bands];
        for (r, m) in members {
            let b = band_of(r.yield_bu_ac);
            sums[b].0 += 1;
            for (s, w) in sums[b].1.iter_mut().zip(&m.weights) {
                *s += w;
            }
        }
        for (band, (count, sum)) in sums.into_iter().enumerate() {
            out.push(AttentionGroup {
                maturity_group: mg,
                band,
                yield_lo: edges[band],
                yield_hi: edges[band + 1],
                count,
                curve: (count > 0).then(|| sum.iter().map(|s| s / count as f64).collect()),
            });
        }
    }
    Ok(out)
}

/// Long format: one row per (group, step); empty groups get a single row without a step.
pub fn attention_distribution_csv(groups: &[AttentionGroup]) -> String {
    let mut out = String::from("mg,band,yield_lo,yield_hi,count,step,mean_alpha\n");
    for g in groups {
        let head = format!(
            "{},{},{},{},{}",
            g.maturity_group,
            g.band,
            fmt_opt(Some(g.yield_lo).filter(|v| v.is_finite()), 2),
            fmt_opt(Some(g.yield_hi).filter(|v| v.is_finite()), 2),
            g.count
        );
        match &g.curve {
            Some(curve) => {
                for (t, a) in curve.iter().enumerate() {
                    out.push_str(&format!("{head},{t},{a:.6}\n"));
                }
            }
            None => out.push_str(&format!("{head},,\n")),
        }
    }
    out
}

pub fn attention_maps_csv(maps: &[AttentionMap]) -> String {
    let mut out = String::from("record_id,step,alpha\n");
    for m in maps {
        for (t, a) in m.weights.iter().enumerate() {
            out.push_str(&format!("{},{t},{a:.6}\n", m.record_id));
        }
    }
    out
}

/// One (MG, cluster) cell of the availability heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatCell {
    pub maturity_group: u8,
    pub cluster: usize,
    pub n_test: usize,
    /// `None` marks a cell without test records.
    pub test_rmse: Option<f64>,
    pub n_train: usize,
    pub train_locations: usize,
    /// Training samples per unique training location; `None` without training data.
    pub ratio: Option<f64>,
}

/// Test RMSE and training density over the full MG × cluster grid.
pub fn availability_heatmap(train: &[Sample], test: &[Sample], test_pred: &[f64]) -> Result<Vec<HeatCell>> {
    if test.len() != test_pred.len() {
        return Err(Error::shape("availability_heatmap", test.len(), test_pred.len()));
    }
    let mgs: BTreeSet<u8> = train.iter().chain(test).map(|s| s.record.maturity_group).collect();
    let clusters: BTreeSet<usize> = train.iter().chain(test).map(|s| s.cluster).collect();
    let mut train_cells: BTreeMap<(u8, usize), (usize, BTreeSet<&str>)> = BTreeMap::new();
    for s in train {
        let e = train_cells.entry((s.record.maturity_group, s.cluster)).or_default();
        e.0 += 1;
        e.1.insert(&s.record.location_id);
    }
    let mut test_cells: BTreeMap<(u8, usize), (usize, f64)> = BTreeMap::new();
    for (s, p) in test.iter().zip(test_pred) {
        let e = test_cells.entry((s.record.maturity_group, s.cluster)).or_default();
        e.0 += 1;
        e.1 += (p - s.record.yield_bu_ac).powi(2);
    }
    let mut out = Vec::with_capacity(mgs.len() * clusters.len());
    for &mg in &mgs {
        for &c in &clusters {
            let (n_train, locs) = train_cells.get(&(mg, c)).map(|(n, l)| (*n, l.len())).unwrap_or((0, 0));
            let (n_test, sse) = test_cells.get(&(mg, c)).copied().unwrap_or((0, 0.0));
            out.push(HeatCell {
                maturity_group: mg,
                cluster: c,
                n_test,
                test_rmse: (n_test > 0).then(|| (sse / n_test as f64).sqrt()),
                n_train,
                train_locations: locs,
                ratio: (locs > 0).then(|| n_train as f64 / locs as f64),
            });
        }
    }
    Ok(out)
}

pub fn heatmap_csv(cells: &[HeatCell]) -> String {
    let mut out = String::from("mg,cluster,n_test,test_rmse,n_train,train_locations,ratio\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.maturity_group,
            c.cluster,
            c.n_test,
            fmt_opt(c.test_rmse, 3),
            c.n_train,
            c.train_locations,
            fmt_opt(c.ratio, 3)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Matrix;

    fn rec(id: &str, year: i32, mg: u8, loc: &str, y: f64) -> PerformanceRecord {
        PerformanceRecord {
            record_id: id.into(),
            year,
            location_id: loc.into(),
            genotype_id: "G".into(),
            maturity_group: mg,
            yield_bu_ac: y,
        }
    }

    fn sample(id: &str, mg: u8, cluster: usize, loc: &str, y: f64) -> Sample {
        Sample {
            record: rec(id, 2010, mg, loc, y),
            cluster,
            weather: Matrix::zeros(1, 7),
            mg: 0.0,
            cluster_feature: 0.0,
            target: 0.0,
        }
    }

    #[test]
    fn rmse_and_r2() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(r2(&a, &a).unwrap(), 1.0);
        assert_eq!(r2(&[2.5; 4], &a).unwrap(), 0.0);
        assert!(r2(&a, &[3.0; 4]).is_err());
        assert!(rmse(&a, &a[..2]).is_err());
        assert!(rmse(&[], &[]).is_err());
        assert!((rmse(&[1.0, 3.0], &[0.0, 0.0]).unwrap() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn metric_csv_format() {
        let r = MetricReport {
            model: "stacked".into(),
            split: "test".into(),
            n: 10,
            rmse: 7.13,
            r2: Some(0.802),
        };
        assert_eq!(metrics_csv(&[r]), "model,split,n,rmse,r2\nstacked,test,10,7.130,0.802\n");
    }

    #[test]
    fn ablation_rows_and_widths() {
        assert_eq!(ABLATION_ROWS.len(), 7);
        let base = ModelConfig::default();
        let all = ablation_config(&base, true, true, true);
        assert_eq!(all.encoder.input_dim, 9);
        assert_eq!(ablation_config(&base, false, false, true).encoder.input_dim, 7);
        assert_eq!(ablation_config(&base, true, false, false).encoder.input_dim, 1);
        assert!(ABLATION_ROWS.iter().all(|&(_, m, c, w)| ablation_config(&base, m, c, w).validate().is_ok()));
    }

    #[test]
    fn yearwise() {
        let records = vec![rec("a", 2014, 3, "L", 50.0), rec("b", 2014, 3, "L", 60.0), rec("c", 2015, 3, "L", 40.0)];
        let exact = yearwise_abs_error(&records, &[50.0, 60.0, 40.0], &[]).unwrap();
        assert!(exact.rows.iter().all(|r| r.abs_error == 0.0));
        let shifted = yearwise_abs_error(&records[..2], &[51.0, 61.0], &[2014, 2016]).unwrap();
        assert_eq!(shifted.rows.len(), 1);
        assert!((shifted.rows[0].abs_error - 1.0).abs() < 1e-12);
        assert_eq!(shifted.omitted, vec![2016]);
        assert_eq!(yearwise_csv(&shifted), "year,n,mean_predicted,mean_actual,abs_error\n2014,2,56.000,55.000,1.000\n");
    }

    #[test]
    fn attention_groups() {
        let records: Vec<PerformanceRecord> = (0..8).map(|i| rec(&format!("r{i}"), 2010, if i < 6 { 1 } else { 7 }, "L", 10.0 * i as f64)).collect();
        let uniform: Vec<AttentionMap> = records
            .iter()
            .map(|r| AttentionMap {
                record_id: r.record_id.clone(),
                weights: vec![0.25; 4],
            })
            .collect();
        let groups = attention_distribution(&uniform, &records, Some(&[1, 7, 3]), 2).unwrap();
        assert_eq!(groups.len(), 6);
        for g in &groups {
            if let Some(c) = &g.curve {
                assert!(c.iter().all(|&a| (a - 0.25).abs() < 1e-15));
                assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let mg1: Vec<usize> = groups.iter().filter(|g| g.maturity_group == 1).map(|g| g.count).collect();
        assert_eq!(mg1, vec![3, 3]);
        let mg3: Vec<&AttentionGroup> = groups.iter().filter(|g| g.maturity_group == 3).collect();
        assert!(mg3.iter().all(|g| g.count == 0 && g.curve.is_none()));
        assert!(attention_distribution_csv(&groups).contains("3,0,NA,NA,0,,\n"));
        assert!(attention_distribution(&uniform[1..], &records, None, 4).is_err());
    }

    #[test]
    fn heatmap_cells() {
        let train: Vec<Sample> = (0..40).map(|i| sample(&format!("t{i}"), 2, 0, &format!("L{}", i % 8), 50.0)).collect();
        let test = vec![sample("x", 2, 0, "L0", 50.0), sample("y", 3, 1, "L1", 40.0)];
        let cells = availability_heatmap(&train, &test, &[53.0, 44.0]).unwrap();
        assert_eq!(cells.len(), 4);
        let c20 = cells.iter().find(|c| c.maturity_group == 2 && c.cluster == 0).unwrap();
        assert_eq!(c20.ratio, Some(5.0));
        assert_eq!(c20.test_rmse, Some(3.0));
        let c21 = cells.iter().find(|c| c.maturity_group == 2 && c.cluster == 1).unwrap();
        assert_eq!(c21.test_rmse, None);
        assert!(heatmap_csv(&cells).contains("2,1,0,NA,0,0,NA\n"));

        let single = availability_heatmap(&train[..1], &test[..1], &[53.0]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].test_rmse, Some(rmse(&[53.0], &[50.0]).unwrap()));
    }
}
