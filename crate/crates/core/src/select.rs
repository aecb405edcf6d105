//! Greedy forward selection of weather variables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::eval::rmse;
use crate::model::{predict, train, ModelConfig};
use crate::pipeline::{DatasetSplit, SplitName, WeatherVar};
use crate::rng::derive_seed;

/// Which split scores each candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSet {
    Validation,
    Test,
}

impl MetricSet {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricSet::Validation => "validation",
            MetricSet::Test => "test",
        }
    }

    pub fn split(self) -> SplitName {
        match self {
            MetricSet::Validation => SplitName::Validation,
            MetricSet::Test => SplitName::Test,
        }
    }
}

impl fmt::Display for MetricSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Record filter by maturity group: north is MG 0–4, south is MG 4–8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    All,
    North,
    South,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::All => "all",
            Region::North => "north",
            Region::South => "south",
        }
    }

    pub fn contains(self, maturity_group: u8) -> bool {
        match self {
            Region::All => true,
            Region::North => maturity_group <= 4,
            Region::South => maturity_group >= 4,
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Region::All),
            "north" => Ok(Region::North),
            "south" => Ok(Region::South),
            _ => Err(Error::Config(format!("unknown region '{s}' (expected all, north or south)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyStep {
    pub variable: WeatherVar,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
    pub pool: Vec<WeatherVar>,
    pub metric_set: MetricSet,
    /// Every evaluated subset with its RMSE, in evaluation order.
    pub evaluations: Vec<(Vec<WeatherVar>, f64)>,
}

impl GreedyTrace {
    pub fn order(&self) -> Vec<WeatherVar> {
        self.steps.iter().map(|s| s.variable).collect()
    }

    /// `step,variable,rmse,metric_set,region` with one-based steps.
    pub fn to_csv(&self, region: Region) -> String {
        let mut out = String::from("step,variable,rmse,metric_set,region\n");
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{},{},{:.6},{},{}\n", i + 1, s.variable, s.rmse, self.metric_set, region.as_str()));
        }
        out
    }
}

/// Evaluator failure; carries the steps completed before it.
#[derive(Debug, Error)]
#[error("greedy search aborted after {} step(s): {source}", partial.steps.len())]
pub struct GreedyAbort {
    pub partial: GreedyTrace,
    #[source]
    pub source: Error,
}

/// Adds, one at a time, the candidate whose addition gives the lowest RMSE.
///
/// Candidates are tried in canonical variable order and only a strictly
/// lower RMSE displaces the incumbent, so exact ties go to the earlier
/// variable.
pub fn greedy_search<F>(pool: &[WeatherVar], metric_set: MetricSet, mut evaluator: F) -> std::result::Result<GreedyTrace, GreedyAbort>
where
    F: FnMut(&[WeatherVar]) -> Result<f64>,
{
    let mut remaining: Vec<WeatherVar> = WeatherVar::ALL.iter().copied().filter(|v| pool.contains(v)).collect();
    let mut trace = GreedyTrace {
        steps: Vec::new(),
        pool: remaining.clone(),
        metric_set,
        evaluations: Vec::new(),
    };
    if remaining.is_empty() {
        return Err(GreedyAbort {
            partial: trace,
            source: Error::Config("greedy search needs a nonempty pool".into()),
        });
    }
    let mut selected: Vec<WeatherVar> = Vec::new();
    while !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (i, &candidate) in remaining.iter().enumerate() {
            let mut subset = selected.clone();
            subset.push(candidate);
            let score = match evaluator(&subset) {
                Ok(s) if s.is_finite() => s,
                Ok(s) => {
                    return Err(GreedyAbort {
                        partial: trace,
                        source: Error::NonFinite(format!("evaluator returned {s} for {subset:?}")),
                    })
                }
                Err(source) => return Err(GreedyAbort { partial: trace, source }),
            };
            trace.evaluations.push((subset, score));
            if best.is_none_or(|(_, b)| score < b) {
                best = Some((i, score));
            }
        }
        let (i, score) = best.expect("remaining is nonempty");
        let chosen = remaining.remove(i);
        log::info!("greedy step {}: {chosen} (RMSE {score:.4})", selected.len() + 1);
        selected.push(chosen);
        trace.steps.push(GreedyStep { variable: chosen, rmse: score });
    }
    Ok(trace)
}

/// Evaluator that trains `base` from scratch on each subset and scores it in bu/acre.
///
/// The training seed is derived from `base.seed` and the subset, so every
/// evaluation starts fresh and is reproducible.
pub fn model_evaluator<'a>(base: &'a ModelConfig, data: &'a DatasetSplit, metric_set: MetricSet) -> impl FnMut(&[WeatherVar]) -> Result<f64> + 'a {
    move |subset: &[WeatherVar]| {
        let mut cfg = base.clone();
        cfg.use_weather = true;
        cfg.weather_vars = subset.to_vec();
        cfg.sync_input_dim();
        let names: Vec<&str> = subset.iter().map(|v| v.name()).collect();
        cfg.seed = derive_seed(base.seed, &format!("greedy/{}", names.join("+")));
        let (weights, _) = train(&cfg, data)?;
        let samples = data.get(metric_set.split());
        if samples.is_empty() {
            return Err(Error::Data(format!("the {metric_set} split is empty")));
        }
        let pred = predict(&weights, &cfg, samples, &data.scaler)?;
        let actual: Vec<f64> = samples.iter().map(|s| s.record.yield_bu_ac).collect();
        rmse(&pred, &actual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use WeatherVar::*;

    fn additive(costs: &[(WeatherVar, f64)]) -> impl FnMut(&[WeatherVar]) -> Result<f64> + '_ {
        move |subset| Ok(subset.iter().map(|v| costs.iter().find(|(w, _)| w == v).unwrap().1).sum())
    }

    #[test]
    fn picks_the_cheapest_first() {
        let costs = [(Adni, 5.0), (Ap, 4.0), (Arh, 6.0)];
        let trace = greedy_search(&[Adni, Ap, Arh], MetricSet::Validation, additive(&costs)).unwrap();
        assert_eq!(trace.order(), vec![Ap, Adni, Arh]);
        assert_eq!(trace.steps[0].rmse, 4.0);
        assert_eq!(trace.steps[2].rmse, 15.0);
        assert_eq!(trace.evaluations.len(), 3 + 2 + 1);
    }

    #[test]
    fn exact_ties_go_to_canonical_order() {
        let trace = greedy_search(&[AvgSur, MinSur, Ap], MetricSet::Test, |_| Ok(1.0)).unwrap();
        assert_eq!(trace.order(), vec![Ap, MinSur, AvgSur]);
    }

    #[test]
    fn single_variable_pool() {
        let trace = greedy_search(&[Mdni], MetricSet::Validation, |_| Ok(7.5)).unwrap();
        assert_eq!(trace.steps, vec![GreedyStep { variable: Mdni, rmse: 7.5 }]);
        assert_eq!(trace.to_csv(Region::North), "step,variable,rmse,metric_set,region\n1,MDNI,7.500000,validation,north\n");
    }

    #[test]
    fn failure_returns_the_partial_trace() {
        let mut calls = 0;
        let err = greedy_search(&[Adni, Ap, Arh], MetricSet::Validation, |s| {
            calls += 1;
            if s.len() == 2 && s[1] == Arh {
                Err(Error::Data("boom".into()))
            } else {
                Ok(s.len() as f64 + if s.contains(&Ap) { 0.0 } else { 1.0 })
            }
        })
        .unwrap_err();
        assert_eq!(err.partial.order(), vec![Ap]);
        assert!(matches!(err.source, Error::Data(_)));
        assert!(greedy_search(&[], MetricSet::Validation, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn regions() {
        assert!(Region::North.contains(4) && Region::South.contains(4));
        assert!(Region::North.contains(0) && !Region::North.contains(5));
        assert!(!Region::South.contains(3) && Region::South.contains(8));
        assert_eq!("South".parse::<Region>().unwrap(), Region::South);
    }
}
