use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::{PerformanceRecord, WeatherSeries, WeatherVar, N_WEATHER, SEASON_DAYS};

const PERFORMANCE_COLUMNS: [&str; 6] = ["record_id", "year", "location_id", "genotype_id", "maturity_group", "yield_bu_ac"];

/// Row skipped at ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipEntry {
    pub line: u64,
    pub record_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkipReport {
    pub entries: Vec<SkipEntry>,
}

impl SkipReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, reason: &str) -> usize {
        self.entries.iter().filter(|e| e.reason.starts_with(reason)).count()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn column_indices<const N: usize>(headers: &csv::StringRecord, wanted: &[&str; N], path: &Path) -> Result<[usize; N]> {
    let mut idx = [0usize; N];
    let mut missing = Vec::new();
    for (slot, name) in idx.iter_mut().zip(wanted) {
        match headers.iter().position(|h| h.trim() == *name) {
            Some(i) => *slot = i,
            None => missing.push(name.to_string()),
        }
    }
    if missing.is_empty() {
        Ok(idx)
    } else {
        Err(Error::MissingColumns {
            path: path.to_path_buf(),
            missing,
        })
    }
}

pub fn parse_performance_csv(path: impl AsRef<Path>) -> Result<(Vec<PerformanceRecord>, SkipReport)> {
    let path = path.as_ref();
    parse_performance(open(path)?, path)
}

/// Parses performance rows. Rows without a usable yield or with invalid
/// fields are skipped and reported with their line numbers.
pub fn parse_performance<R: Read>(reader: R, source: &Path) -> Result<(Vec<PerformanceRecord>, SkipReport)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let [c_id, c_year, c_loc, c_geno, c_mg, c_yield] = column_indices(&headers, &PERFORMANCE_COLUMNS, source)?;

    let mut records = Vec::new();
    let mut report = SkipReport::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let record_id = field(c_id).to_string();
        let mut skip = |reason: String| {
            report.entries.push(SkipEntry {
                line,
                record_id: (!record_id.is_empty()).then(|| record_id.clone()),
                reason,
            })
        };
        if record_id.is_empty() {
            skip("missing record_id".into());
            continue;
        }
        let yield_raw = field(c_yield);
        if yield_raw.is_empty() || yield_raw.eq_ignore_ascii_case("na") {
            skip("missing yield".into());
            continue;
        }
        let Ok(yield_bu_ac) = yield_raw.parse::<f64>() else {
            skip(format!("unparseable yield '{yield_raw}'"));
            continue;
        };
        if !yield_bu_ac.is_finite() || yield_bu_ac <= 0.0 {
            skip(format!("non-positive yield {yield_raw}"));
            continue;
        }
        let Ok(year) = field(c_year).parse::<i32>() else {
            skip(format!("unparseable year '{}'", field(c_year)));
            continue;
        };
        let Ok(mg) = field(c_mg).parse::<f64>() else {
            skip(format!("unparseable maturity_group '{}'", field(c_mg)));
            continue;
        };
        if !(0.0..=8.0).contains(&mg) {
            skip(format!("MG out of range ({mg})"));
            continue;
        }
        if mg.fract() != 0.0 {
            skip(format!("MG not integer ({mg})"));
            continue;
        }
        let (location_id, genotype_id) = (field(c_loc), field(c_geno));
        if location_id.is_empty() || genotype_id.is_empty() {
            skip("missing location_id or genotype_id".into());
            continue;
        }
        records.push(PerformanceRecord {
            record_id,
            year,
            location_id: location_id.to_string(),
            genotype_id: genotype_id.to_string(),
            maturity_group: mg as u8,
            yield_bu_ac,
        });
    }
    Ok((records, report))
}

/// Weather series keyed by (location, year), in canonical order.
pub type WeatherStore = BTreeMap<(String, i32), WeatherSeries>;

pub fn parse_weather_csv(path: impl AsRef<Path>) -> Result<WeatherStore> {
    let path = path.as_ref();
    parse_weather(open(path)?, path)
}

/// Parses daily weather rows. Any malformed or physically inconsistent row is
/// a fatal data error naming its line.
pub fn parse_weather<R: Read>(reader: R, source: &Path) -> Result<WeatherStore> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut wanted = ["location_id", "year", "day_index", "", "", "", "", "", "", ""];
    for (slot, v) in wanted[3..].iter_mut().zip(WeatherVar::ALL) {
        *slot = v.name();
    }
    let cols = column_indices(&headers, &wanted, source)?;

    let mut days: BTreeMap<(String, i32), BTreeMap<usize, [f64; N_WEATHER]>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::Data(format!("{}:{line}: {msg}", source.display()));
        let field = |i: usize| row.get(cols[i]).map(str::trim).unwrap_or("");
        let location = field(0).to_string();
        let year: i32 = field(1).parse().map_err(|_| bad(format!("unparseable year '{}'", field(1))))?;
        let day: usize = field(2).parse().map_err(|_| bad(format!("unparseable day_index '{}'", field(2))))?;
        if day >= SEASON_DAYS {
            return Err(bad(format!("day_index {day} outside 0..{}", SEASON_DAYS - 1)));
        }
        let mut values = [0.0; N_WEATHER];
        for (j, v) in values.iter_mut().enumerate() {
            let raw = field(3 + j);
            *v = raw.parse().map_err(|_| bad(format!("unparseable {} '{raw}'", WeatherVar::ALL[j])))?;
        }
        WeatherSeries::check_day(&values).map_err(bad)?;
        if days.entry((location, year)).or_default().insert(day, values).is_some() {
            return Err(bad(format!("duplicate day_index {day}")));
        }
    }

    let mut store = WeatherStore::new();
    for ((location_id, year), by_day) in days {
        if let Some((pos, _)) = by_day.keys().enumerate().find(|(i, d)| i != *d) {
            return Err(Error::Data(format!(
                "{}: weather ({location_id}, {year}) is missing day_index {pos}",
                source.display()
            )));
        }
        let series = WeatherSeries {
            location_id: location_id.clone(),
            year,
            days: by_day.into_values().collect(),
        };
        store.insert((location_id, year), series);
    }
    Ok(store)
}

/// A performance record linked to its season of weather.
#[derive(Debug, Clone, Copy)]
pub struct Joined<'a> {
    pub record: &'a PerformanceRecord,
    pub series: &'a WeatherSeries,
}

/// Links every record to its (location, year) series. All gaps are reported together.
pub fn join_weather<'a>(records: &'a [PerformanceRecord], store: &'a WeatherStore) -> Result<Vec<Joined<'a>>> {
    let mut gaps = std::collections::BTreeSet::new();
    let mut joined = Vec::with_capacity(records.len());
    for record in records {
        match store.get(&(record.location_id.clone(), record.year)) {
            Some(series) => joined.push(Joined { record, series }),
            None => {
                gaps.insert((record.location_id.clone(), record.year));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::MissingWeather(gaps.into_iter().collect()));
    }
    for j in &joined {
        if j.series.days.len() != SEASON_DAYS {
            return Err(Error::Data(format!(
                "weather series ({}, {}) has {} days, expected {SEASON_DAYS}",
                j.series.location_id,
                j.series.year,
                j.series.days.len()
            )));
        }
    }
    Ok(joined)
}
