use serde::{Deserialize, Serialize};

use crate::numcore::Matrix;
use crate::pipeline::{WeatherVar, N_WEATHER};

/// Linear map sending the fitted min to −1 and the fitted max to +1.
///
/// Values outside the fitted range map outside (−1, 1); nothing is clamped.
/// A constant feature maps to 0 and inverts to its single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut it = values.into_iter();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(MinMax { min, max })
    }

    pub fn is_constant(&self) -> bool {
        self.max <= self.min
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            2.0 * (x - self.min) / (self.max - self.min) - 1.0
        }
    }

    pub fn invert(&self, s: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            self.min + (s + 1.0) * (self.max - self.min) / 2.0
        }
    }
}

/// Per-feature scalers fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    /// One scaler per weather variable, in canonical order, fitted over every time step.
    pub weather: Vec<MinMax>,
    pub maturity_group: MinMax,
    pub cluster: MinMax,
    pub target: MinMax,
}

impl Scaler {
    /// Fits on raw (unscaled) training features. Returns `None` for an empty set.
    pub fn fit<'a, I>(train: I) -> Option<Scaler>
    where
        I: IntoIterator<Item = (&'a Matrix, f64, f64, f64)> + Clone,
    {
        let mut weather = Vec::with_capacity(N_WEATHER);
        for j in 0..N_WEATHER {
            let col = train.clone().into_iter().flat_map(move |(m, _, _, _)| (0..m.rows()).map(move |t| m.get(t, j)));
            weather.push(MinMax::fit(col)?);
        }
        let scaler = Scaler {
            weather,
            maturity_group: MinMax::fit(train.clone().into_iter().map(|r| r.1))?,
            cluster: MinMax::fit(train.clone().into_iter().map(|r| r.2))?,
            target: MinMax::fit(train.into_iter().map(|r| r.3))?,
        };
        for name in scaler.constant_features() {
            log::warn!("feature {name} is constant on the training split; it is scaled to 0");
        }
        Some(scaler)
    }

    pub fn constant_features(&self) -> Vec<String> {
        let mut out: Vec<String> = WeatherVar::ALL
            .iter()
            .zip(&self.weather)
            .filter(|(_, s)| s.is_constant())
            .map(|(v, _)| v.name().to_string())
            .collect();
        for (name, s) in [("maturity_group", &self.maturity_group), ("cluster", &self.cluster), ("yield", &self.target)] {
            if s.is_constant() {
                out.push(name.to_string());
            }
        }
        out
    }

    pub fn apply_weather(&self, raw: &Matrix) -> Matrix {
        let mut out = raw.clone();
        for t in 0..out.rows() {
            for (v, s) in out.row_mut(t).iter_mut().zip(&self.weather) {
                *v = s.apply(*v);
            }
        }
        out
    }

    pub fn invert_weather(&self, scaled: &Matrix) -> Matrix {
        let mut out = scaled.clone();
        for t in 0..out.rows() {
            for (v, s) in out.row_mut(t).iter_mut().zip(&self.weather) {
                *v = s.invert(*v);
            }
        }
        out
    }
}
