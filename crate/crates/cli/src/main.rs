//! `yatt`: batch runner for the yield-prediction pipeline.
//!
//! Every command reads one TOML run config (see `yatt.example.toml`), applies
//! flag overrides, echoes the resolved config into the output directory and
//! writes deterministic CSV/JSON artifacts next to it.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.

mod commands;
mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use yatt_core::pipeline::Stratify;
use yatt_core::select::Region;
use yatt_core::{Granularity, ModelKind, WeatherVar};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "yatt", version, about = "Explainable soybean yield prediction from weekly weather")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run config (TOML). Built-in defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed (at most 2^63 - 1 so the echoed config stays valid TOML).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic performance/weather/correlation set into the data directory.
    GenerateData {
        #[arg(long)]
        locations: Option<usize>,
        #[arg(long)]
        years: Option<usize>,
        #[arg(long)]
        genotypes: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Cluster genotypes from the correlation matrix.
    Cluster {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Join, downsample, split and fit scalers.
    Prepare {
        #[arg(long)]
        granularity: Option<Granularity>,
        #[arg(long)]
        stratify: Option<Stratify>,
    },
    /// Train a model on the prepared split.
    Train(TrainFlags),
    /// Metrics, year-wise errors, heatmap and (optionally) the ablation grid.
    Evaluate,
    /// Greedy forward selection of weather variables.
    Greedy {
        /// Score candidates on test RMSE instead of validation RMSE.
        #[arg(long)]
        paper_protocol: bool,
        #[arg(long)]
        region: Option<Region>,
        /// Comma-separated candidate pool, e.g. ADNI,MinSur.
        #[arg(long, value_delimiter = ',')]
        pool: Option<Vec<WeatherVar>>,
    },
    /// LASSO and random-forest baselines on flattened features.
    Baseline,
    /// Attention curves by maturity group and yield band.
    AttentionExport {
        /// Comma-separated maturity groups.
        #[arg(long, value_delimiter = ',')]
        mg: Option<Vec<u8>>,
        #[arg(long)]
        bands: Option<usize>,
    },
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    kind: Option<ModelKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden1: Option<usize>,
    #[arg(long)]
    hidden2: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenerateData { .. } => "generate-data",
            Command::Cluster { .. } => "cluster",
            Command::Prepare { .. } => "prepare",
            Command::Train(_) => "train",
            Command::Evaluate => "evaluate",
            Command::Greedy { .. } => "greedy",
            Command::Baseline => "baseline",
            Command::AttentionExport { .. } => "attention-export",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::GenerateData {
                locations,
                years,
                genotypes,
                trials,
            } => {
                set(&mut cfg.synthetic.locations, *locations);
                set(&mut cfg.synthetic.years, *years);
                set(&mut cfg.synthetic.genotypes, *genotypes);
                set(&mut cfg.synthetic.trials, *trials);
            }
            Command::Cluster { k } => set(&mut cfg.clustering.k, *k),
            Command::Prepare { granularity, stratify } => {
                set(&mut cfg.prepare.granularity, *granularity);
                set(&mut cfg.prepare.stratify, *stratify);
            }
            Command::Train(f) => {
                set(&mut cfg.model.kind, f.kind);
                set(&mut cfg.model.epochs, f.epochs);
                set(&mut cfg.model.learning_rate, f.learning_rate);
                set(&mut cfg.model.batch_size, f.batch_size);
                set(&mut cfg.model.encoder.hidden1, f.hidden1);
                set(&mut cfg.model.encoder.hidden2, f.hidden2);
            }
            Command::Greedy {
                paper_protocol,
                region,
                pool,
            } => {
                cfg.greedy.paper_protocol |= paper_protocol;
                set(&mut cfg.greedy.region, *region);
                set(&mut cfg.greedy.pool, pool.clone());
            }
            Command::AttentionExport { mg, bands } => {
                set(&mut cfg.attention.mg, mg.clone());
                set(&mut cfg.attention.bands, *bands);
            }
            Command::Evaluate | Command::Baseline => {}
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Failure categories, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(yatt_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use yatt_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Config(_)) => 1,
            CliError::Core(E::NonFinite(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<yatt_core::Error> for CliError {
    fn from(e: yatt_core::Error) -> Self {
        CliError::Core(e)
    }
}

/// Log lines go to stderr and to `<out_dir>/<command>.log`. Timestamps never reach the artifacts.
struct Tee {
    file: File,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.file.write_all(buf)?;
        io::stderr().write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.file.flush()?;
        io::stderr().flush()
    }
}

fn init_logging(cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    let out = &cfg.paths.out_dir;
    fs::create_dir_all(out).map_err(|e| yatt_core::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let path = cfg.paths.out(&format!("{command}.log"));
    let file = File::create(&path).map_err(|e| yatt_core::Error::Io { path, source: e })?;
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(Tee { file })))
        .try_init()
        .ok();
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.global.seed);
    set(&mut cfg.paths.data_dir, cli.global.data_dir.clone());
    set(&mut cfg.paths.out_dir, cli.global.out_dir.clone());
    cli.command.apply(&mut cfg);
    cfg.resolve()?;

    let name = cli.command.name();
    init_logging(&cfg, name)?;
    commands::write_text(&cfg.paths.out(&format!("{name}.config.toml")), &cfg.to_toml()?)?;
    log::info!("{name}: seed {}, output in {}", cfg.seed, cfg.paths.out_dir.display());

    match cli.command {
        Command::GenerateData { .. } => commands::generate_data(&cfg),
        Command::Cluster { .. } => commands::cluster(&cfg),
        Command::Prepare { .. } => commands::prepare(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Greedy { .. } => commands::greedy(&cfg),
        Command::Baseline => commands::baseline(&cfg),
        Command::AttentionExport { .. } => commands::attention_export(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
