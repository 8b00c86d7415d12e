//! `fmfog`: config-driven pipelines over the fmfog library.

mod commands;
mod config;
mod context;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;
use context::Ctx;

#[derive(Debug, Parser)]
#[command(name = "fmfog", version, about = "Event-triggered freezing-of-gait detection pipelines")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Fm,
    Trigger,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the configured inputs and summarize them.
    Ingest,
    /// Harmonize, normalize and window the inputs into a window pack.
    Preprocess,
    /// Masked-reconstruction pretraining.
    Pretrain {
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Supervised training of the FoG head or the trigger.
    Finetune {
        #[arg(long, value_enum, default_value_t = ModelKind::Fm)]
        model: ModelKind,
        /// Pretrained FM checkpoint; from scratch when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Metrics of a checkpoint on labeled windows.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Repeated subject-disjoint fine-tune/evaluate runs.
    CrossPatient {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Paired runs with and without the sensor-location embedding.
    AblationContext {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Replay a stream through the triggered runtime.
    Stream {
        /// Fine-tuned FM checkpoint.
        #[arg(long)]
        fm: PathBuf,
        /// Trigger checkpoint; ground-truth labels gate the FM when omitted.
        #[arg(long)]
        trigger: Option<PathBuf>,
        /// Replay a window pack instead of the first configured input.
        #[arg(long)]
        windows: Option<PathBuf>,
        /// Stored normalization stats (JSON); online stats otherwise.
        #[arg(long)]
        norm: Option<PathBuf>,
        /// Pace replay at the stream's own clock.
        #[arg(long)]
        realtime: bool,
    },
    /// Power model fit, battery table and optional event-log integration.
    Energy {
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Finite-difference gradient verification of every layer and model.
    Gradcheck {
        /// Checks always run in f64; the flag is accepted for explicitness.
        #[arg(long = "f64")]
        f64: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Preprocess => "preprocess",
            Command::Pretrain { .. } => "pretrain",
            Command::Finetune { .. } => "finetune",
            Command::Eval { .. } => "eval",
            Command::CrossPatient { .. } => "cross-patient",
            Command::AblationContext { .. } => "ablation-context",
            Command::Stream { .. } => "stream",
            Command::Energy { .. } => "energy",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

fn exit_code(category: &str) -> u8 {
    match category {
        "input" => 2,
        "config" => 3,
        "data" => 4,
        "shape" => 5,
        "checkpoint" => 6,
        "io" => 7,
        _ => 1,
    }
}

fn run(cli: Cli) -> fmfog::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p, cli.seed)?,
        None => RunConfig::from_toml("", cli.seed)?,
    };
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let ctx = Ctx::new(cfg, cli.command.name())?;
    commands::dispatch(&ctx, cli.command)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(exit_code(e.category()))
        }
    }
}
