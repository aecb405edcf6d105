use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use yatt_core::baselines::{flat_features, forest_fit, lasso_select};
use yatt_core::eval::{
    ablation_csv, ablation_grid, attention_distribution, attention_distribution_csv, attention_maps_csv, availability_heatmap, evaluate_split, heatmap_csv,
    metrics_csv, yearwise_abs_error, yearwise_csv, MetricReport,
};
use yatt_core::model::{attention_maps, checkpoint, train as fit};
use yatt_core::pipeline::synthetic;
use yatt_core::pipeline::{parse_performance_csv, parse_weather_csv, partition_records, prepare_with_partition, Partition, SkipReport, SplitName, WeatherStore};
use yatt_core::select::{greedy_search, model_evaluator, MetricSet};
use yatt_core::{ClusterAssignment, CorrelationMatrix, DatasetSplit, Error, Granularity, ModelKind, PerformanceRecord, Scaler};

use crate::config::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

/// Summary written by `prepare` and checked by every later command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Prepared {
    granularity: Granularity,
    seq_len: usize,
    n_train: usize,
    n_validation: usize,
    n_test: usize,
    skipped_rows: usize,
    constant_features: Vec<String>,
}

fn log_skips(skips: &SkipReport) {
    for s in &skips.entries {
        log::warn!("performance line {}: skipped ({})", s.line, s.reason);
    }
}

pub fn generate_data(cfg: &RunConfig) -> Result<()> {
    let data = synthetic::generate(&cfg.synthetic_spec())?;
    data.write_to(&cfg.paths.data_dir)?;
    log::info!(
        "wrote {} records, {} weather series and a {}-genotype correlation matrix to {}",
        data.performance.len(),
        data.weather.len(),
        data.correlation.len(),
        cfg.paths.data_dir.display()
    );
    Ok(())
}

pub fn cluster(cfg: &RunConfig) -> Result<()> {
    let corr = CorrelationMatrix::read_csv(cfg.paths.correlation())?;
    let c = &cfg.clustering;
    let assignment = yatt_core::genotype::cluster_genotypes(&corr, c.k, cfg.cluster_seed(), c.max_iters, c.tol)?;
    log::info!("{} genotypes in {} clusters, inertia {:.6}", corr.len(), c.k, assignment.inertia);
    assignment.write_csv(cfg.paths.out("clusters.csv"))?;
    Ok(())
}

fn load_inputs(cfg: &RunConfig) -> Result<(Vec<PerformanceRecord>, SkipReport, WeatherStore, ClusterAssignment)> {
    let (records, skips) = parse_performance_csv(cfg.paths.performance())?;
    let weather = parse_weather_csv(cfg.paths.weather())?;
    let clusters = ClusterAssignment::read_csv(cfg.paths.out("clusters.csv"))?;
    Ok((records, skips, weather, clusters))
}

pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let (records, skips, weather, clusters) = load_inputs(cfg)?;
    log_skips(&skips);
    let partition = partition_records(&records, cfg.prepare.stratify, cfg.split_seed())?;
    let data = prepare_with_partition(&records, &weather, &clusters, cfg.prepare.granularity, &partition, None)?;

    let mut split_csv = String::from("record_id,split\n");
    for (i, name) in partition.membership() {
        split_csv.push_str(&format!("{},{}\n", records[i].record_id, name.as_str()));
    }
    write_text(&cfg.paths.out("split.csv"), &split_csv)?;
    write_text(&cfg.paths.out("scaler.json"), &serde_json::to_string_pretty(&data.scaler).map_err(Error::from)?)?;

    let constant = data.scaler.constant_features();
    for name in &constant {
        log::warn!("feature {name} is constant on the training split and scales to 0");
    }
    let info = Prepared {
        granularity: data.granularity,
        seq_len: data.seq_len(),
        n_train: data.train.len(),
        n_validation: data.validation.len(),
        n_test: data.test.len(),
        skipped_rows: skips.entries.len(),
        constant_features: constant,
    };
    log::info!(
        "prepared T_x={} ({:?}): {} train, {} validation, {} test",
        info.seq_len,
        info.granularity,
        info.n_train,
        info.n_validation,
        info.n_test
    );
    write_text(&cfg.paths.out("prepared.json"), &serde_json::to_string_pretty(&info).map_err(Error::from)?)?;
    Ok(())
}

/// Rebuilds the prepared split from the raw inputs plus `split.csv` and `scaler.json`.
fn load_prepared(cfg: &RunConfig) -> Result<DatasetSplit> {
    let info: Prepared = serde_json::from_str(&read_text(&cfg.paths.out("prepared.json"))?).map_err(Error::from)?;
    if info.granularity != cfg.prepare.granularity {
        return Err(CliError::Config(format!(
            "the split was prepared at {:?} granularity but the config asks for {:?}; rerun prepare",
            info.granularity, cfg.prepare.granularity
        )));
    }
    let (records, _, weather, clusters) = load_inputs(cfg)?;
    let scaler: Scaler = serde_json::from_str(&read_text(&cfg.paths.out("scaler.json"))?).map_err(Error::from)?;

    let split_path = cfg.paths.out("split.csv");
    let index: BTreeMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.record_id.as_str(), i)).collect();
    let mut rdr = csv::Reader::from_path(&split_path).map_err(Error::from)?;
    let mut members = Vec::with_capacity(records.len());
    for row in rdr.records() {
        let row = row.map_err(Error::from)?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::Data(format!("{}:{line}: {msg}", split_path.display()));
        let id = row.get(0).unwrap_or("").trim();
        let i = *index.get(id).ok_or_else(|| bad(format!("record '{id}' is not in the performance file")))?;
        let name: SplitName = row.get(1).unwrap_or("").trim().parse().map_err(|e: Error| bad(e.to_string()))?;
        members.push((i, name));
    }
    let partition = Partition::from_membership(members);
    let data = prepare_with_partition(&records, &weather, &clusters, info.granularity, &partition, Some(scaler))?;
    Ok(data)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = load_prepared(cfg)?;
    let model = cfg.model_config();
    let (weights, history) = fit(&model, &data)?;
    log::info!(
        "trained {} model ({} parameters) for {} epochs in {:.1}s; best epoch {}",
        model.kind,
        weights.param_count(),
        history.epochs(),
        history.seconds.iter().sum::<f64>(),
        history.best_epoch + 1
    );
    checkpoint::save(cfg.paths.out("model.yatt"), &weights, &model, &data.scaler)?;
    write_text(&cfg.paths.out("history.csv"), &history.to_csv())?;
    Ok(())
}

fn check_scaler(ck: &checkpoint::Checkpoint, data: &DatasetSplit) -> Result<()> {
    if ck.scaler != data.scaler {
        return Err(Error::Data("the checkpoint was trained with a different scaler than scaler.json; retrain after prepare".into()).into());
    }
    if ck.config.encoder.seq_len != data.seq_len() {
        return Err(Error::Data(format!("the checkpoint expects T_x={} but the prepared split has {}", ck.config.encoder.seq_len, data.seq_len())).into());
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let data = load_prepared(cfg)?;
    let ck = checkpoint::load(cfg.paths.out("model.yatt"), None)?;
    check_scaler(&ck, &data)?;
    let id = ck.config.kind.as_str();

    let mut reports = Vec::new();
    let mut test_pred = Vec::new();
    for split in [SplitName::Train, SplitName::Validation, SplitName::Test] {
        if data.get(split).is_empty() {
            log::warn!("the {} split is empty; no metrics", split.as_str());
            continue;
        }
        let (report, pred) = evaluate_split(id, &ck.weights, &ck.config, &data, split)?;
        log::info!("{} RMSE {:.3} bu/acre", split.as_str(), report.rmse);
        reports.push(report);
        if split == SplitName::Test {
            test_pred = pred;
        }
    }
    write_text(&cfg.paths.out("metrics.csv"), &metrics_csv(&reports))?;

    let test_records: Vec<PerformanceRecord> = data.test.iter().map(|s| s.record.clone()).collect();
    let table = yearwise_abs_error(&test_records, &test_pred, &cfg.evaluate.years)?;
    write_text(&cfg.paths.out("yearwise.csv"), &yearwise_csv(&table))?;

    let cells = availability_heatmap(&data.train, &data.test, &test_pred)?;
    write_text(&cfg.paths.out("heatmap.csv"), &heatmap_csv(&cells))?;

    if cfg.evaluate.ablation_seeds.is_empty() {
        log::info!("no ablation seeds configured; skipping the ablation grid");
    } else {
        let rows = ablation_grid(&cfg.model_config(), &data, &cfg.evaluate.ablation_seeds)?;
        write_text(&cfg.paths.out("ablation.csv"), &ablation_csv(&rows))?;
    }
    Ok(())
}

pub fn greedy(cfg: &RunConfig) -> Result<()> {
    let g = &cfg.greedy;
    let data = load_prepared(cfg)?.filtered(|r| g.region.contains(r.maturity_group));
    log::info!("greedy search over {} records in region {}", data.len(), g.region.as_str());
    let metric_set = if g.paper_protocol { MetricSet::Test } else { MetricSet::Validation };
    let mut base = cfg.model.clone();
    base.seed = cfg.greedy_seed();
    let path = cfg.paths.out("greedy.csv");
    match greedy_search(&g.pool, metric_set, model_evaluator(&base, &data, metric_set)) {
        Ok(trace) => write_text(&path, &trace.to_csv(g.region)),
        Err(abort) => {
            write_text(&path, &abort.partial.to_csv(g.region))?;
            log::error!("partial trace written to {}", path.display());
            Err(abort.source.into())
        }
    }
}

pub fn baseline(cfg: &RunConfig) -> Result<()> {
    let data = load_prepared(cfg)?;
    let (mg, cl) = (cfg.model.use_mg, cfg.model.use_cluster);
    let xs = |s: &[yatt_core::Sample]| flat_features(s, mg, cl);
    let ys = |s: &[yatt_core::Sample]| s.iter().map(|s| s.record.yield_bu_ac).collect::<Vec<f64>>();
    if data.validation.is_empty() || data.test.is_empty() {
        return Err(Error::Data("baselines need nonempty validation and test splits".into()).into());
    }
    let (x_train, y_train) = (xs(&data.train)?, ys(&data.train));
    let (x_val, y_val) = (xs(&data.validation)?, ys(&data.validation));
    let (x_test, y_test) = (xs(&data.test)?, ys(&data.test));

    let b = &cfg.baseline;
    let (lasso, _) = lasso_select(&x_train, &y_train, &x_val, &y_val, &b.lambdas, b.tol, b.max_sweeps)?;
    log::info!("LASSO kept lambda {} ({} nonzero coefficients)", lasso.lambda, lasso.coefficients.iter().filter(|c| **c != 0.0).count());
    let forest = forest_fit(&x_train, &y_train, &b.forest, cfg.forest_seed())?;

    let lasso_id = format!("lasso[lambda={}]", lasso.lambda);
    let reports = vec![
        MetricReport::new(&lasso_id, "validation", &lasso.predict(&x_val)?, &y_val)?,
        MetricReport::new(&lasso_id, "test", &lasso.predict(&x_test)?, &y_test)?,
        MetricReport::new("forest", "validation", &forest.predict(&x_val), &y_val)?,
        MetricReport::new("forest", "test", &forest.predict(&x_test), &y_test)?,
    ];
    for r in &reports {
        log::info!("{} {} RMSE {:.3}", r.model, r.split, r.rmse);
    }
    write_text(&cfg.paths.out("baselines.csv"), &metrics_csv(&reports))
}

pub fn attention_export(cfg: &RunConfig) -> Result<()> {
    let data = load_prepared(cfg)?;
    let ck = checkpoint::load(cfg.paths.out("model.yatt"), Some(ModelKind::Attention))?;
    check_scaler(&ck, &data)?;
    let maps = attention_maps(&ck.weights, &ck.config, &data.test)?;
    let records: Vec<PerformanceRecord> = data.test.iter().map(|s| s.record.clone()).collect();
    let filter = (!cfg.attention.mg.is_empty()).then_some(cfg.attention.mg.as_slice());
    let groups = attention_distribution(&maps, &records, filter, cfg.attention.bands)?;
    write_text(&cfg.paths.out("attention_dist.csv"), &attention_distribution_csv(&groups))?;
    write_text(&cfg.paths.out("attention_maps.csv"), &attention_maps_csv(&maps))?;
    log::info!("exported attention for {} test records ({} groups)", maps.len(), groups.len());
    Ok(())
}
