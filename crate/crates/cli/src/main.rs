mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use electrosense::classifier::Family;
use electrosense::geometry::FishKind;
use electrosense::Error;

use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "electrosense", version, about = "Electro-sensing shape classification experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    family: Option<String>,
    #[arg(long, global = true)]
    fish: Option<String>,
    /// Angular span of the fish positions, in radians.
    #[arg(long, global = true)]
    aperture: Option<f64>,
    /// Noise levels as fractions of the data fluctuation, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the feature dictionary.
    BuildDict,
    /// Simulate a measurement bundle for the configured target.
    Simulate,
    /// Classify a measurement bundle against a dictionary.
    Classify {
        /// Bundle directory written by `simulate`.
        #[arg(long)]
        bundle: PathBuf,
        /// Dictionary file written by `build-dict`.
        #[arg(long)]
        dict: PathBuf,
    },
    /// Detection probability against noise level.
    Stability {
        /// Precomputed dictionary; built from the configuration otherwise.
        #[arg(long)]
        dict: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> electrosense::Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(f) = &common.family {
        c.family = f.parse::<Family>()?;
    }
    if let Some(f) = &common.fish {
        c.fish = f.parse::<FishKind>()?;
    }
    if let Some(a) = common.aperture {
        c.aperture = a;
    }
    if let Some(n) = &common.noise {
        c.noise = n.clone();
    }
    if let Some(t) = common.trials {
        c.trials = t;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> electrosense::Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let cfg = resolve(&cli.common)?;
    let out = cli.common.out.clone();
    match cli.command {
        Command::BuildDict => commands::build_dict(&cfg, out.unwrap_or_else(|| "dictionary.json".into())),
        Command::Simulate => {
            let level = match cli.common.noise.as_deref() {
                None => 0.0,
                Some([l]) => *l,
                Some(_) => return Err(Error::InvalidInput("simulate takes a single --noise level".into())),
            };
            commands::simulate(&cfg, level, out.unwrap_or_else(|| "bundle".into()))
        }
        Command::Classify { bundle, dict } => {
            commands::classify(&cfg, &bundle, &dict, out.unwrap_or_else(|| "classification.json".into()))
        }
        Command::Stability { dict } => {
            commands::stability(&cfg, dict.as_deref(), out.unwrap_or_else(|| "stability.csv".into()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
