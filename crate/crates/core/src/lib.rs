//! Explainable yield prediction from weekly weather sequences.
//!
//! The crate holds everything the `yatt` command line drives:
//!
//! * [`numcore`]: dense matrices, activations, MSE, Adam and a central-difference gradient checker.
//! * [`lstm`]: the LSTM cell, single-layer unrolling with dropout and the two-layer stacked encoder
//!   with backpropagation through time.
//! * [`attention`]: soft temporal attention over encoder annotations.
//! * [`model`]: the stacked-LSTM and temporal-attention regressors, training and checkpoints.
//! * [`genotype`]: correlation-matrix intake and k-means genotype clustering.
//! * [`pipeline`]: ingestion, joins, downsampling, scaling, splitting and synthetic data.
//! * [`select`]: greedy forward selection of weather variables.
//! * [`baselines`]: LASSO and random forest regressors over flattened features.
//! * [`eval`]: metrics, ablation grid, year-wise errors, attention distributions and heatmaps.

pub mod attention;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod genotype;
pub mod lstm;
pub mod model;
pub mod numcore;
pub mod pipeline;
pub mod rng;
pub mod select;

pub use error::{Error, Result};
pub use genotype::{ClusterAssignment, CorrelationMatrix};
pub use model::{ModelConfig, ModelKind, ModelWeights, StaticMode};
pub use numcore::Matrix;
pub use pipeline::{DatasetSplit, Granularity, PerformanceRecord, Sample, Scaler, WeatherSeries, WeatherVar};
