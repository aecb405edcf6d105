use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::ClusterAssignment;
use crate::numcore::Matrix;
use crate::pipeline::{downsample, join_weather, Granularity, PerformanceRecord, Scaler, WeatherStore, N_WEATHER};
use crate::rng::seeded;

/// Fractions of the train/validation/test cut, in tenths.
const SHARES: [usize; 3] = [8, 1, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::Data(format!("unknown split name '{s}'"))),
        }
    }
}

/// Optional grouping applied before the 80/10/10 cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratify {
    #[default]
    None,
    Year,
    Location,
}

impl std::str::FromStr for Stratify {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Stratify::None),
            "year" => Ok(Stratify::Year),
            "location" => Ok(Stratify::Location),
            _ => Err(Error::Config(format!("unknown stratification '{s}' (expected none, year or location)"))),
        }
    }
}

/// Record indices per split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    /// Split membership per index, for export.
    pub fn membership(&self) -> BTreeMap<usize, SplitName> {
        let mut out = BTreeMap::new();
        for name in [SplitName::Train, SplitName::Validation, SplitName::Test] {
            for &i in self.get(name) {
                out.insert(i, name);
            }
        }
        out
    }

    /// Rebuilds a partition from `(index, split)` pairs.
    pub fn from_membership(items: impl IntoIterator<Item = (usize, SplitName)>) -> Self {
        let mut p = Partition::default();
        for (i, name) in items {
            match name {
                SplitName::Train => p.train.push(i),
                SplitName::Validation => p.validation.push(i),
                SplitName::Test => p.test.push(i),
            }
        }
        p
    }
}

/// Largest-remainder sizes of an 80/10/10 cut of `n` items; ties go to the earlier split.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let total: usize = SHARES.iter().sum();
    let mut sizes = SHARES.map(|s| n * s / total);
    let remainders = SHARES.map(|s| (n * s) % total);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Seeded shuffle then contiguous 80/10/10 cut.
///
/// `keys` gives each item's canonical identity; items are sorted by key
/// before shuffling so the result does not depend on input order. With
/// `strata`, every stratum is cut separately and the pieces are concatenated
/// in stratum order.
pub fn split_indices(keys: &[&str], strata: Option<&[String]>, seed: u64) -> Result<Partition> {
    if keys.len() < 10 {
        return Err(Error::Data(format!("need at least 10 records to split, got {}", keys.len())));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..keys.len() {
        let g = strata.map_or("", |s| s[i].as_str());
        groups.entry(g).or_default().push(i);
    }
    let mut rng = seeded(seed);
    let mut p = Partition::default();
    for (_, mut idx) in groups {
        idx.sort_by(|&a, &b| keys[a].cmp(keys[b]).then(a.cmp(&b)));
        idx.shuffle(&mut rng);
        let [n_train, n_val, _] = split_sizes(idx.len());
        p.train.extend_from_slice(&idx[..n_train]);
        p.validation.extend_from_slice(&idx[n_train..n_train + n_val]);
        p.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    Ok(p)
}

/// One prepared record: scaled weather sequence, scaled statics and scaled target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub record: PerformanceRecord,
    pub cluster: usize,
    /// `T_x × 7`, canonical variable order, scaled.
    pub weather: Matrix,
    pub mg: f64,
    pub cluster_feature: f64,
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub scaler: Scaler,
    pub granularity: Granularity,
}

impl DatasetSplit {
    pub fn seq_len(&self) -> usize {
        self.granularity.seq_len()
    }

    pub fn get(&self, name: SplitName) -> &[Sample] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps only samples whose record satisfies `keep`; the fitted scaler is retained.
    pub fn filtered(&self, keep: impl Fn(&PerformanceRecord) -> bool) -> DatasetSplit {
        let f = |v: &[Sample]| v.iter().filter(|s| keep(&s.record)).cloned().collect();
        DatasetSplit {
            train: f(&self.train),
            validation: f(&self.validation),
            test: f(&self.test),
            scaler: self.scaler.clone(),
            granularity: self.granularity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareOptions {
    pub granularity: Granularity,
    pub seed: u64,
    pub stratify: Stratify,
}

/// Record-level 80/10/10 partition keyed by record id.
pub fn partition_records(records: &[PerformanceRecord], stratify: Stratify, seed: u64) -> Result<Partition> {
    let keys: Vec<&str> = records.iter().map(|r| r.record_id.as_str()).collect();
    let strata: Option<Vec<String>> = match stratify {
        Stratify::None => None,
        Stratify::Year => Some(records.iter().map(|r| format!("{:08}", r.year)).collect()),
        Stratify::Location => Some(records.iter().map(|r| r.location_id.clone()).collect()),
    };
    split_indices(&keys, strata.as_deref(), seed)
}

/// Joins, downsamples, splits and scales.
pub fn prepare(records: &[PerformanceRecord], weather: &WeatherStore, clusters: &ClusterAssignment, opts: PrepareOptions) -> Result<DatasetSplit> {
    let partition = partition_records(records, opts.stratify, opts.seed)?;
    prepare_with_partition(records, weather, clusters, opts.granularity, &partition, None)
}

/// Builds the split from an explicit partition, fitting the scaler on its
/// training part unless one is supplied.
pub fn prepare_with_partition(
    records: &[PerformanceRecord],
    weather: &WeatherStore,
    clusters: &ClusterAssignment,
    granularity: Granularity,
    partition: &Partition,
    scaler: Option<Scaler>,
) -> Result<DatasetSplit> {
    let joined = join_weather(records, weather)?;
    let mut sequences: BTreeMap<(&str, i32), Matrix> = BTreeMap::new();
    for j in &joined {
        let key = (j.series.location_id.as_str(), j.series.year);
        if let std::collections::btree_map::Entry::Vacant(e) = sequences.entry(key) {
            e.insert(downsample(j.series, granularity)?);
        }
    }
    let raw: Vec<(&Matrix, usize)> = joined
        .iter()
        .map(|j| {
            let cluster = clusters.cluster_of(&j.record.genotype_id)?;
            Ok((&sequences[&(j.record.location_id.as_str(), j.record.year)], cluster))
        })
        .collect::<Result<_>>()?;

    if partition.len() != records.len() || partition.membership().len() != records.len() {
        return Err(Error::Data(format!(
            "partition covers {} indices but there are {} records",
            partition.membership().len(),
            records.len()
        )));
    }
    if let Some(&bad) = partition.membership().keys().find(|&&i| i >= records.len()) {
        return Err(Error::Data(format!("partition index {bad} out of range")));
    }

    let scaler = match scaler {
        Some(s) => s,
        None => {
            let train = partition
                .train
                .iter()
                .map(|&i| (raw[i].0, records[i].maturity_group as f64, raw[i].1 as f64, records[i].yield_bu_ac));
            Scaler::fit(train).ok_or_else(|| Error::Data("training split is empty".into()))?
        }
    };
    if scaler.weather.len() != N_WEATHER {
        return Err(Error::Data(format!("scaler has {} weather columns, expected {N_WEATHER}", scaler.weather.len())));
    }

    let make = |idx: &[usize]| -> Vec<Sample> {
        idx.iter()
            .map(|&i| {
                let record = &records[i];
                let (seq, cluster) = raw[i];
                Sample {
                    record: record.clone(),
                    cluster,
                    weather: scaler.apply_weather(seq),
                    mg: scaler.maturity_group.apply(record.maturity_group as f64),
                    cluster_feature: scaler.cluster.apply(cluster as f64),
                    target: scaler.target.apply(record.yield_bu_ac),
                }
            })
            .collect()
    };
    Ok(DatasetSplit {
        train: make(&partition.train),
        validation: make(&partition.validation),
        test: make(&partition.test),
        scaler,
        granularity,
    })
}
