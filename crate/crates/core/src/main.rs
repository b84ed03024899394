use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use obsreward::harness::{self, EvalRequest, ExperimentConfig, FINAL_WINDOW};
use obsreward::Error;

#[derive(Parser)]
#[command(name = "obsreward", version, about = "Reward shaping from internal models learned on state-only demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Restrict to one seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output location.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted expert demonstrations (output: demos file).
    DemoGen(Common),
    /// Fit the internal model on the demonstrations (output: model file).
    TrainModel(Common),
    /// Run the RL experiment for every seed (output: run directory).
    TrainRl(Common),
    /// Roll a checkpoint greedily and print summary statistics as JSON.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate; defaults to the seed's checkpoint in the run directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to the config's eval_episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Aggregate run directories into one JSON document.
    Summarize {
        /// Configs whose output directories to include.
        #[arg(long)]
        config: Vec<PathBuf>,
        /// Final-window length in episodes.
        #[arg(long, default_value_t = FINAL_WINDOW)]
        window: usize,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run directories to include.
        dirs: Vec<PathBuf>,
    },
}

fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

fn emit<T: serde::Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => obsreward::io::write_atomic(p, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::DemoGen(c) => {
            let mut cfg = load(&c.config)?;
            if let (Some(out), Some(d)) = (c.out, cfg.demos.as_mut()) {
                d.path = out;
            }
            emit(&harness::demo_gen(&cfg)?, None)
        }
        Command::TrainModel(c) => {
            let mut cfg = load(&c.config)?;
            if let (Some(out), Some(m)) = (c.out, cfg.model.as_mut()) {
                m.path = out;
            }
            let (_, report) = harness::train_model(&cfg)?;
            eprintln!(
                "trained {:?} model: {} epochs, best validation mse {:.3e} (persistence {:.3e})",
                report.kind, report.epochs_run, report.best_validation_mse, report.persistence_mse
            );
            Ok(())
        }
        Command::TrainRl(c) => {
            let mut cfg = load(&c.config)?;
            if let Some(seed) = c.seed {
                cfg.seeds = vec![seed];
            }
            if let Some(out) = c.out {
                cfg.output_dir = out;
            }
            let manifest = harness::run_experiment(&cfg)?;
            let failed = manifest.failed();
            if !failed.is_empty() {
                for s in manifest.seeds.iter().filter(|s| s.error.is_some()) {
                    eprintln!("seed {} failed: {}", s.seed, s.error.as_deref().unwrap_or_default());
                }
                return Err(Error::Training(format!("{} of {} seeds failed: {failed:?}", failed.len(), manifest.seeds.len())).into());
            }
            eprintln!("{}: {} seeds written to {}", manifest.name, manifest.seeds.len(), cfg.output_dir.display());
            Ok(())
        }
        Command::Eval { common: c, checkpoint, episodes } => {
            let cfg = load(&c.config)?;
            let seed = c.seed.unwrap_or(cfg.seeds[0]);
            let req = EvalRequest {
                checkpoint: checkpoint.unwrap_or_else(|| cfg.output_dir.join(format!("seed-{seed}.ckpt"))),
                seed,
                episodes: episodes.unwrap_or(cfg.eval_episodes),
            };
            emit(&harness::eval(&cfg, &req)?, c.out.as_deref())
        }
        Command::Summarize { config, window, out, mut dirs } => {
            for path in &config {
                dirs.push(load(path)?.output_dir);
            }
            emit(&harness::summarize(&dirs, window)?, out.as_deref())
        }
    }
}

/// 2 for bad configs, usage and missing inputs; 3 for failures at run time.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Usage(_)) => 2,
        Some(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
