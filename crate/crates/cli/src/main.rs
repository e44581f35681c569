//! `hybeam` — train, evaluate, and plot hybrid-precoding experiments.
//!
//! Exit codes: 0 on success, 2 on configuration or I/O errors, 3 on numeric
//! failures (divergence, non-finite values).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hybeam_cli::config::{schema_text, ExperimentConfig};
use hybeam_cli::plot::{plot_file, PlotKind};
use hybeam_cli::runner::{
    cmd_baseline, cmd_eval, cmd_gen_data, cmd_run, cmd_train, GenDataSpec,
};
use hybeam_core::training::Strategy;
use hybeam_core::Error;

#[derive(Parser)]
#[command(
    name = "hybeam",
    about = "Model-based learning for joint channel estimation and hybrid precoding",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test channel dataset.
    GenData {
        /// Output directory (receives `train/` and `test/`).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        antennas: usize,
        /// Training channels (default desk scale).
        #[arg(long, default_value_t = 3000)]
        train_count: usize,
        /// Test channels (default desk scale).
        #[arg(long, default_value_t = 300)]
        test_count: usize,
        /// Maximum propagation paths per channel.
        #[arg(long, default_value_t = 8)]
        paths_max: usize,
        /// Std of antenna position errors, in wavelengths.
        #[arg(long, default_value_t = 0.1)]
        perturbation: f64,
        /// Use the full-size dataset (30,000 train / 1,000 test).
        #[arg(long)]
        paper_scale: bool,
    },
    /// Run every configured strategy and baseline over the (SNR, T) grid.
    Run {
        /// Experiment config (JSON; see `hybeam schema`).
        #[arg(long)]
        config: PathBuf,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one strategy in one grid cell and save its checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Strategy name (defaults to the config's first entry).
        #[arg(long)]
        strategy: Option<String>,
        /// Grid SNR point in dB (defaults to the config's first entry).
        #[arg(long)]
        snr_db: Option<f64>,
        /// Grid frame count (defaults to the config's first entry).
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Evaluate saved checkpoints on the test split of one grid cell.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint directory written by `train` (or a `run` cell).
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Method label for the emitted rows.
        #[arg(long, default_value = "eval")]
        method: String,
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Run only the untrained references over the grid.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render one figure family from a metrics table.
    Plot {
        /// metrics.csv produced by `run`, `eval`, or `baseline`.
        #[arg(long)]
        metrics: PathBuf,
        /// `nmse-curve` or `sumrate-per-iteration`.
        #[arg(long)]
        kind: PlotKind,
        /// SVG file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the experiment config schema.
    Schema,
}

fn parse_strategy(name: &str) -> Result<Strategy, Error> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| Error::Config(format!("unknown strategy {name:?}")))
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData {
            out,
            seed,
            antennas,
            train_count,
            test_count,
            paths_max,
            perturbation,
            paper_scale,
        } => {
            let mut spec =
                GenDataSpec { antennas, train_count, test_count, paths_max, perturbation, seed };
            if paper_scale {
                spec = spec.paper_scale();
            }
            let (train_hash, test_hash) = cmd_gen_data(&spec, &out)?;
            println!(
                "wrote {} train / {} test channels to {}",
                spec.train_count,
                spec.test_count,
                out.display()
            );
            println!("train payload sha256 {train_hash}");
            println!("test payload sha256 {test_hash}");
            Ok(())
        }
        Command::Run { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            cmd_run(&cfg, &out)?;
            println!("run complete: {}", out.join("metrics.csv").display());
            Ok(())
        }
        Command::Train { config, out, seed, strategy, snr_db, frames } => {
            let cfg = load_config(&config, seed)?;
            let strategy = match strategy {
                Some(name) => parse_strategy(&name)?,
                None => *cfg.strategies.first().ok_or_else(|| {
                    Error::Config("config lists no strategies and none was given".into())
                })?,
            };
            cmd_train(&cfg, strategy, snr_db, frames, &out)?;
            println!("checkpoints written to {}", out.display());
            Ok(())
        }
        Command::Eval { config, checkpoints, out, seed, method, snr_db, frames } => {
            let cfg = load_config(&config, seed)?;
            cmd_eval(&cfg, &checkpoints, &method, snr_db, frames, &out)?;
            println!("metrics written to {}", out.join("metrics.csv").display());
            Ok(())
        }
        Command::Baseline { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            cmd_baseline(&cfg, &out)?;
            println!("baseline metrics written to {}", out.join("metrics.csv").display());
            Ok(())
        }
        Command::Plot { metrics, kind, out } => {
            plot_file(&metrics, kind, &out)?;
            println!("figure written to {}", out.display());
            Ok(())
        }
        Command::Schema => {
            print!("{}", schema_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Numeric(_)) => {
            eprintln!("numeric failure: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
