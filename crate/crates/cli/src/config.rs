//! Run configuration: one TOML file per run, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use yatt_core::baselines::ForestParams;
use yatt_core::pipeline::synthetic::SyntheticSpec;
use yatt_core::pipeline::Stratify;
use yatt_core::rng::derive_seed;
use yatt_core::select::Region;
use yatt_core::{Granularity, ModelConfig, WeatherVar};

use crate::CliError;

/// Purpose strings hashed with the master seed into sub-seeds.
const SEED_PURPOSES: [&str; 6] = ["generate-data/synthetic", "cluster/kmeans", "prepare/split", "train/model", "greedy/model", "baseline/forest"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random choice derives from it.
    pub seed: u64,
    pub paths: Paths,
    pub synthetic: SyntheticSpec,
    pub clustering: Clustering,
    pub prepare: Prepare,
    pub model: ModelConfig,
    pub evaluate: Evaluate,
    pub greedy: Greedy,
    pub baseline: Baseline,
    pub attention: Attention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Holds performance.csv, weather.csv and correlation.csv.
    pub data_dir: PathBuf,
    /// Every artifact a command writes lands here.
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl Paths {
    pub fn performance(&self) -> PathBuf {
        self.data_dir.join("performance.csv")
    }

    pub fn weather(&self) -> PathBuf {
        self.data_dir.join("weather.csv")
    }

    pub fn correlation(&self) -> PathBuf {
        self.data_dir.join("correlation.csv")
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Clustering {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for Clustering {
    fn default() -> Self {
        Clustering {
            k: 20,
            max_iters: 300,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prepare {
    pub granularity: Granularity,
    pub stratify: Stratify,
}

impl Default for Prepare {
    fn default() -> Self {
        Prepare {
            granularity: Granularity::Weekly,
            stratify: Stratify::None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluate {
    /// Seeds for the input-ablation grid; empty skips it (7 trainings per seed).
    pub ablation_seeds: Vec<u64>,
    /// Years for the year-wise table; empty means every year in the test split.
    pub years: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Greedy {
    pub pool: Vec<WeatherVar>,
    /// Score candidates on test RMSE instead of validation RMSE.
    pub paper_protocol: bool,
    pub region: Region,
}

impl Default for Greedy {
    fn default() -> Self {
        Greedy {
            pool: WeatherVar::ALL.to_vec(),
            paper_protocol: false,
            region: Region::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Baseline {
    /// LASSO penalties tried; the one with the lowest validation RMSE is kept.
    pub lambdas: Vec<f64>,
    pub tol: f64,
    pub max_sweeps: usize,
    pub forest: ForestParams,
}

impl Default for Baseline {
    fn default() -> Self {
        Baseline {
            lambdas: vec![0.001, 0.01, 0.1, 0.5, 1.0],
            tol: 1e-8,
            max_sweeps: 10_000,
            forest: ForestParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Attention {
    /// Maturity groups to export; empty exports all.
    pub mg: Vec<u8>,
    /// Equal-count yield bands per maturity group.
    pub bands: usize,
}

impl Default for Attention {
    fn default() -> Self {
        Attention { mg: Vec::new(), bands: 4 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.model.seed != 0 || cfg.synthetic.seed != 0 {
            return Err(CliError::Config(format!(
                "{}: set the top-level `seed`; model.seed and synthetic.seed are derived from it",
                path.display()
            )));
        }
        Ok(cfg)
    }

    /// Fills in fields that follow from others and validates the result.
    pub fn resolve(&mut self) -> Result<(), CliError> {
        self.model.encoder.seq_len = self.prepare.granularity.seq_len();
        self.model.sync_input_dim();
        self.model.validate()?;
        if self.clustering.k == 0 {
            return Err(CliError::Config("clustering.k must be at least 1".into()));
        }
        if self.attention.bands == 0 {
            return Err(CliError::Config("attention.bands must be at least 1".into()));
        }
        if self.baseline.lambdas.is_empty() || self.baseline.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(CliError::Config("baseline.lambdas must be a nonempty list of penalties ≥ 0".into()));
        }
        Ok(())
    }

    /// The synthetic spec with its derived seed.
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: derive_seed(self.seed, SEED_PURPOSES[0]),
            ..self.synthetic.clone()
        }
    }

    /// The model config with its derived training seed.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: derive_seed(self.seed, SEED_PURPOSES[3]),
            ..self.model.clone()
        }
    }

    pub fn cluster_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_PURPOSES[1])
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_PURPOSES[2])
    }

    pub fn forest_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_PURPOSES[5])
    }

    pub fn greedy_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_PURPOSES[4])
    }

    /// The config as TOML, followed by the derived sub-seeds as comments
    /// (TOML integers cannot hold every u64).
    pub fn to_toml(&self) -> Result<String, CliError> {
        let mut text = toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize the resolved config: {e}")))?;
        text.push_str("\n# Derived sub-seeds:\n");
        for purpose in SEED_PURPOSES {
            text.push_str(&format!("#   {purpose} = {}\n", derive_seed(self.seed, purpose)));
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_thirty_weekly_steps() {
        let mut cfg = RunConfig::default();
        cfg.resolve().unwrap();
        assert_eq!(cfg.model.encoder.seq_len, 30);
        assert_eq!(cfg.model.encoder.input_dim, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("seed = 1\n[model]\nhidden = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("sed = 1\n").is_err());
    }

    #[test]
    fn resolved_config_roundtrips() {
        let mut cfg: RunConfig = toml::from_str("seed = 7\n[prepare]\ngranularity = \"monthly\"\n[model]\nkind = \"attention\"\nweather_vars = [\"MinSur\", \"ADNI\"]\n").unwrap();
        cfg.resolve().unwrap();
        assert_eq!(cfg.model.encoder.seq_len, 7);
        assert_eq!(cfg.model.encoder.input_dim, 4);
        let text = cfg.to_toml().unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn echoed_config_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.toml");
        let mut cfg = RunConfig {
            seed: 11,
            ..RunConfig::default()
        };
        cfg.resolve().unwrap();
        let text = cfg.to_toml().unwrap();
        assert!(text.contains(&format!("train/model = {}", cfg.model_config().seed)));
        fs::write(&path, text).unwrap();
        let mut back = RunConfig::load(&path).unwrap();
        back.resolve().unwrap();
        assert_eq!(back, cfg);

        fs::write(&path, "seed = 1\n[model]\nseed = 5\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Config(_))));
    }

    #[test]
    fn example_config_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../yatt.example.toml");
        let mut cfg = RunConfig::load(&path).unwrap();
        cfg.resolve().unwrap();
    }
}
