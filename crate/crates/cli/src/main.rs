use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gripnet::harness::{
    cmd_check, cmd_eval, cmd_export, cmd_train, generate_synthetic, parse_config, RunConfig, SyntheticSpec,
    CHECKPOINT_FILE,
};

#[derive(Parser)]
#[command(name = "gripnet", version, about = "Supergraph representation learning on heterogeneous graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lp,
    Nc,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the supergraph of a run config.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train and write a checkpoint and per-epoch history.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides training.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split and write report.json.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to checkpoint.json in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write embeddings_<category>.tsv for every supervertex.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted-community dataset with a ready-to-run config.json.
    Synth {
        #[arg(long, value_enum, default_value = "lp")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(config: &PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = parse_config(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.training.seed = seed;
    }
    if let Some(out) = out {
        cfg.output = out;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Check { config } => {
            let cfg = load(&config, None, None)?;
            print!("{}", cmd_check(&cfg)?);
        }
        Command::Train { config, seed, out } => {
            let cfg = load(&config, seed, out)?;
            let result = cmd_train(&cfg)?;
            if let Some(last) = result.history.last() {
                log::info!("final loss {}", last.loss);
            }
            println!("{}", cfg.output.join(CHECKPOINT_FILE).display());
        }
        Command::Eval {
            config,
            checkpoint,
            seed,
            out,
        } => {
            let cfg = load(&config, seed, out)?;
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.output.join(CHECKPOINT_FILE));
            let report = cmd_eval(&cfg, &checkpoint)?;
            println!("{report}");
        }
        Command::Export { checkpoint, out } => {
            for path in cmd_export(&checkpoint, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Synth { mode, seed, out } => {
            let mut spec = match mode {
                Mode::Lp => SyntheticSpec::default_lp(),
                Mode::Nc => SyntheticSpec::default_nc(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            generate_synthetic(&spec, &out)?;
            println!("{}", out.join("config.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
