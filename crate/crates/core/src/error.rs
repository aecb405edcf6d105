use std::path::PathBuf;

use thiserror::Error;

use crate::model::checkpoint::CheckpointError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}: missing column(s) {missing:?} in header")]
    MissingColumns { path: PathBuf, missing: Vec<String> },

    #[error("no weather series for {}", format_gaps(.0))]
    MissingWeather(Vec<(String, i32)>),

    #[error("unknown genotype '{0}'")]
    UnknownGenotype(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_gaps(gaps: &[(String, i32)]) -> String {
    gaps.iter()
        .map(|(loc, year)| format!("({loc}, {year})"))
        .collect::<Vec<_>>()
        .join(", ")
}
