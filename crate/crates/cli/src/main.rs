//! `afdm`: run AFDM security experiments described by TOML files.

use afdm::campaign;
use afdm::config::{Campaign, ExperimentConfig};
use afdm::Error;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "afdm", version, about = "AFDM chirp-parameter security experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the campaign described by a config and write its CSV.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Load and check a config without running anything.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print analytic mismatch bounds and search-cost orders.
    BoundReport {
        config: PathBuf,
        /// Tolerable phase error in radians (defaults to the config's value, else 0.1).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Width of the kappa search range.
        #[arg(long)]
        kappa_range: Option<f64>,
    },
}

#[derive(Args)]
struct Overrides {
    /// Replace the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the number of Monte Carlo trials per point.
    #[arg(long)]
    trials: Option<u64>,
    /// Replace the output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Path, overrides: &Overrides) -> afdm::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(trials) = overrides.trials {
        cfg.scenario.trials = trials;
    }
    if let Some(out) = &overrides.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(command: Command) -> afdm::Result<()> {
    match command {
        Command::Validate { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            println!(
                "{}: valid {} campaign, {} scenario(s), hash {}",
                config.display(),
                cfg.campaign.kind(),
                cfg.scenarios()?.len(),
                cfg.hash()?
            );
        }
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let out = campaign::run(&cfg)?;
            for line in &out.log {
                println!("{line}");
            }
            if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
            }
            std::fs::write(&cfg.output, &out.csv)
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", cfg.output.display())))?;
            println!("wrote {}", cfg.output.display());
        }
        Command::BoundReport {
            config,
            epsilon,
            kappa_range,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (cfg_eps, cfg_range) = match cfg.campaign {
                Campaign::BoundReport {
                    epsilon, kappa_range, ..
                } => (epsilon, kappa_range),
                _ => (0.1, 1.0),
            };
            print!(
                "{}",
                campaign::bound_tables(&cfg, epsilon.unwrap_or(cfg_eps), kappa_range.unwrap_or(cfg_range))?
            );
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Unsupported(_) => 2,
        Error::NumericalRank(_) => 3,
        Error::Shape(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
