//! Data model, ingestion, downsampling, scaling, splitting and synthetic data.

mod ingest;
mod scale;
mod split;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub use ingest::{join_weather, parse_performance, parse_performance_csv, parse_weather, parse_weather_csv, Joined, SkipEntry, SkipReport, WeatherStore};
pub use scale::{MinMax, Scaler};
pub use split::{partition_records, prepare, prepare_with_partition, split_indices, split_sizes, DatasetSplit, Partition, PrepareOptions, Sample, SplitName, Stratify};

/// Number of daily observations per season (April 1 through October 31).
pub const SEASON_DAYS: usize = 214;
/// Days covered by the non-daily granularities.
pub const DOWNSAMPLED_DAYS: usize = 210;
pub const N_WEATHER: usize = 7;

/// Weather variables in canonical order. The order doubles as the greedy tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WeatherVar {
    /// Average direct normal irradiance (W·m⁻²).
    #[serde(rename = "ADNI")]
    Adni,
    /// Average precipitation (inches).
    #[serde(rename = "AP")]
    Ap,
    /// Average relative humidity (%).
    #[serde(rename = "ARH")]
    Arh,
    /// Maximum direct normal irradiance (W·m⁻²).
    #[serde(rename = "MDNI")]
    Mdni,
    /// Maximum surface temperature (°C).
    #[serde(rename = "MaxSur")]
    MaxSur,
    /// Minimum surface temperature (°C).
    #[serde(rename = "MinSur")]
    MinSur,
    /// Average surface temperature (°C).
    #[serde(rename = "AvgSur")]
    AvgSur,
}

/// How a variable is aggregated over a downsampling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Max,
    Min,
}

impl WeatherVar {
    pub const ALL: [WeatherVar; N_WEATHER] = [
        WeatherVar::Adni,
        WeatherVar::Ap,
        WeatherVar::Arh,
        WeatherVar::Mdni,
        WeatherVar::MaxSur,
        WeatherVar::MinSur,
        WeatherVar::AvgSur,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            WeatherVar::Adni => "ADNI",
            WeatherVar::Ap => "AP",
            WeatherVar::Arh => "ARH",
            WeatherVar::Mdni => "MDNI",
            WeatherVar::MaxSur => "MaxSur",
            WeatherVar::MinSur => "MinSur",
            WeatherVar::AvgSur => "AvgSur",
        }
    }

    /// Precipitation is averaged, not summed.
    pub fn aggregation(self) -> Aggregation {
        match self {
            WeatherVar::Mdni | WeatherVar::MaxSur => Aggregation::Max,
            WeatherVar::MinSur => Aggregation::Min,
            WeatherVar::Adni | WeatherVar::Ap | WeatherVar::Arh | WeatherVar::AvgSur => Aggregation::Mean,
        }
    }
}

impl fmt::Display for WeatherVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeatherVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeatherVar::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown weather variable '{s}'")))
    }
}

/// Temporal resolution of the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Daily,
    Weekly,
    Biweekly,
    Monthly,
}

impl Granularity {
    /// Window length in days; `None` for daily data.
    pub fn window(self) -> Option<usize> {
        match self {
            Granularity::Daily => None,
            Granularity::Weekly => Some(7),
            Granularity::Biweekly => Some(14),
            Granularity::Monthly => Some(30),
        }
    }

    pub fn seq_len(self) -> usize {
        self.window().map_or(SEASON_DAYS, |w| DOWNSAMPLED_DAYS / w)
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "daily" => Ok(Granularity::Daily),
            "weekly" => Ok(Granularity::Weekly),
            "biweekly" => Ok(Granularity::Biweekly),
            "monthly" => Ok(Granularity::Monthly),
            _ => Err(Error::Config(format!("unknown granularity '{s}'"))),
        }
    }
}

/// One plot-level performance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub record_id: String,
    pub year: i32,
    pub location_id: String,
    pub genotype_id: String,
    pub maturity_group: u8,
    pub yield_bu_ac: f64,
}

/// Daily weather for one (location, year); rows are days, columns follow [`WeatherVar::ALL`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub location_id: String,
    pub year: i32,
    pub days: Vec<[f64; N_WEATHER]>,
}

impl WeatherSeries {
    /// Checks the physical invariants of one day's observation.
    pub fn check_day(values: &[f64; N_WEATHER]) -> std::result::Result<(), String> {
        use WeatherVar::*;
        let v = |w: WeatherVar| values[w.index()];
        if values.iter().any(|x| !x.is_finite()) {
            return Err("non-finite value".into());
        }
        if !(v(MinSur) <= v(AvgSur) && v(AvgSur) <= v(MaxSur)) {
            return Err(format!("temperatures out of order (MinSur {}, AvgSur {}, MaxSur {})", v(MinSur), v(AvgSur), v(MaxSur)));
        }
        if !(0.0..=100.0).contains(&v(Arh)) {
            return Err(format!("ARH {} outside [0, 100]", v(Arh)));
        }
        if v(Ap) < 0.0 {
            return Err(format!("negative precipitation {}", v(Ap)));
        }
        if v(Adni) < 0.0 || v(Mdni) < v(Adni) {
            return Err(format!("irradiance out of order (ADNI {}, MDNI {})", v(Adni), v(Mdni)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.days.len() != SEASON_DAYS {
            return Err(Error::Data(format!(
                "weather series ({}, {}) has {} days, expected {SEASON_DAYS}",
                self.location_id,
                self.year,
                self.days.len()
            )));
        }
        for (d, values) in self.days.iter().enumerate() {
            Self::check_day(values).map_err(|e| Error::Data(format!("weather ({}, {}) day {d}: {e}", self.location_id, self.year)))?;
        }
        Ok(())
    }
}

/// Aggregates a daily series into a `T_x × 7` sequence.
///
/// Daily data passes through unchanged (214 steps). Other granularities use
/// the first 210 days cut into 7/14/30-day windows, taking the mean of ADNI,
/// AP, ARH and AvgSur, the max of MDNI and MaxSur, and the min of MinSur.
pub fn downsample(series: &WeatherSeries, granularity: Granularity) -> Result<Matrix> {
    let Some(window) = granularity.window() else {
        return Matrix::from_rows(&series.days);
    };
    if series.days.len() < DOWNSAMPLED_DAYS {
        return Err(Error::Data(format!(
            "weather series ({}, {}) has {} days, need at least {DOWNSAMPLED_DAYS}",
            series.location_id,
            series.year,
            series.days.len()
        )));
    }
    let steps = DOWNSAMPLED_DAYS / window;
    let mut out = Matrix::zeros(steps, N_WEATHER);
    for (s, chunk) in series.days[..DOWNSAMPLED_DAYS].chunks_exact(window).enumerate() {
        for var in WeatherVar::ALL {
            let j = var.index();
            let column = chunk.iter().map(|d| d[j]);
            let value = match var.aggregation() {
                Aggregation::Mean => column.sum::<f64>() / window as f64,
                Aggregation::Max => column.fold(f64::NEG_INFINITY, f64::max),
                Aggregation::Min => column.fold(f64::INFINITY, f64::min),
            };
            out.set(s, j, value);
        }
    }
    Ok(out)
}
