//! Thin command-line entry point; all logic lives in `uniflow::cli`.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use uniflow::cli::{self, AblateMode, RunConfig};

#[derive(Parser)]
#[command(name = "uniflow", about = "Unified spatio-temporal flow prediction")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset suite.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train a model on the configured datasets.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Protocol override: short or long.
        #[arg(long)]
        protocol: Option<String>,
        /// Gaussian input-noise level as a fraction of the dataset mean.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate ablation variants.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// units (memory sizes) or banks (memory types).
        #[arg(long, default_value = "banks")]
        mode: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero- and few-shot evaluation on the held-out target dataset.
    Shot {
        #[arg(long)]
        config: PathBuf,
        /// Fine-tuning fraction (0.05 or 0.10); both when omitted.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump retrieval signatures and pairwise cosine similarities.
    InspectMemory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8)]
        windows: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(
    path: &std::path::Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> uniflow::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    Ok(cfg)
}

fn run() -> uniflow::Result<()> {
    uniflow::init_threads();
    let args = Args::parse();
    match args.command {
        Command::Gen { seed, out } => {
            cli::cmd_gen(seed, &out)?;
        }
        Command::Train { config, seed, out } => {
            let cfg = load_config(&config, seed, out)?;
            cli::cmd_train(&cfg)?;
        }
        Command::Eval {
            config,
            protocol,
            noise,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed, out)?;
            let protocols = match protocol {
                Some(p) => vec![p],
                None => cfg.protocols.clone(),
            };
            cli::cmd_eval(&cfg, &protocols, noise)?;
        }
        Command::Ablate {
            config,
            mode,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed, out)?;
            let mode = match mode.as_str() {
                "units" => AblateMode::Units,
                "banks" => AblateMode::Banks,
                other => {
                    return Err(uniflow::Error::Config(format!(
                        "unknown ablation mode `{other}`"
                    )))
                }
            };
            cli::cmd_ablate(&cfg, mode)?;
        }
        Command::Shot {
            config,
            fraction,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed, out)?;
            cli::cmd_shot(&cfg, fraction)?;
        }
        Command::InspectMemory {
            config,
            windows,
            out,
        } => {
            let cfg = load_config(&config, None, out)?;
            cli::cmd_inspect_memory(&cfg, windows)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        // machine-readable failure on stdout, human-readable on stderr
        let payload = serde_json::json!({ "error": e.to_string(), "kind": e.kind() });
        println!("{payload}");
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
