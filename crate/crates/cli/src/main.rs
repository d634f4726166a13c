use std::path::PathBuf;
use std::process::ExitCode;

use bedexit::synth::Split;
use bedexit_cli::commands::{self, PredictInput, TraceInput};
use bedexit_cli::{CliError, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Bed-exit prediction from load-cell recordings.
#[derive(Parser)]
#[command(name = "bedexit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides paths.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic episodes.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Cut labeled windows from a synth directory and write PNG pairs.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Synth output directory (overrides paths.data_dir).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train on an encoded directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Encoded directory (overrides paths.data_dir).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a checkpoint on one encoded split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Per-window predictions for a raw recording or an encoded split.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Raw recording (CSV or JSON lines).
        #[arg(long, conflicts_with_all = ["data", "split"])]
        raw: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<Split>,
    },
    /// Probability trace over a whole recording.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["data", "episode"])]
        raw: Option<PathBuf>,
        /// Synth output directory holding the episode.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        episode: Option<usize>,
    },
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self, CliError> {
        let cfg = RunConfig::load(common.config.as_deref())?.resolve(common.seed)?;
        let out = common
            .out
            .clone()
            .or_else(|| cfg.paths.out_dir.clone())
            .ok_or_else(|| CliError::Usage("no output directory: pass --out or set paths.out_dir".into()))?;
        Ok(Self { cfg, out })
    }

    fn data(&self, flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.clone()
            .or_else(|| self.cfg.paths.data_dir.clone())
            .ok_or_else(|| CliError::Usage("no data directory: pass --data or set paths.data_dir".into()))
    }

    fn checkpoint(&self, flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.clone()
            .or_else(|| self.cfg.paths.checkpoint.clone())
            .ok_or_else(|| CliError::Usage("no checkpoint: pass --checkpoint or set paths.checkpoint".into()))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { common } => {
            let ctx = Ctx::new(&common)?;
            let n = commands::synth(&ctx.cfg, &ctx.out)?;
            println!("wrote {n} episodes to {}", ctx.out.display());
        }
        Command::Encode { common, data } => {
            let ctx = Ctx::new(&common)?;
            let [train, val, test] = commands::encode(&ctx.cfg, &ctx.data(&data)?, &ctx.out)?;
            println!("encoded windows: train {train}, val {val}, test {test}");
        }
        Command::Train { common, data } => {
            let ctx = Ctx::new(&common)?;
            let outcome = commands::train(&ctx.cfg, &ctx.data(&data)?, &ctx.out)?;
            println!(
                "steps {} evaluations {} best step {} val accuracy {:.4}",
                outcome.steps_run, outcome.evaluations, outcome.best_step, outcome.best_val_accuracy
            );
        }
        Command::Eval { common, data, checkpoint, split } => {
            let ctx = Ctx::new(&common)?;
            let report = commands::eval(&ctx.cfg, &ctx.checkpoint(&checkpoint)?, &ctx.data(&data)?, split, &ctx.out)?;
            println!("{split}\n{}", report.summary());
        }
        Command::Predict { common, checkpoint, raw, data, split } => {
            let ctx = Ctx::new(&common)?;
            let ckpt = ctx.checkpoint(&checkpoint)?;
            let data = if raw.is_none() { Some(ctx.data(&data)?) } else { None };
            let input = match (&raw, &data) {
                (Some(path), _) => PredictInput::Raw(path),
                (None, Some(d)) => PredictInput::Split { data: d, split: split.unwrap_or(Split::Test) },
                (None, None) => unreachable!("data is resolved when raw is absent"),
            };
            let n = commands::predict(&ctx.cfg, &ckpt, input, &ctx.out)?;
            println!("wrote {n} predictions");
        }
        Command::Trace { common, checkpoint, raw, data, episode } => {
            let ctx = Ctx::new(&common)?;
            let ckpt = ctx.checkpoint(&checkpoint)?;
            let data = if raw.is_none() { Some(ctx.data(&data)?) } else { None };
            let input = match (&raw, &data, episode) {
                (Some(path), _, _) => TraceInput::Raw(path),
                (None, Some(d), Some(episode)) => TraceInput::Episode { data: d, episode },
                (None, _, None) => return Err(CliError::Usage("trace needs --raw or --episode".into())),
                (None, None, Some(_)) => unreachable!("data is resolved when raw is absent"),
            };
            let points = commands::trace(&ctx.cfg, &ckpt, input, &ctx.out)?;
            match bedexit::pipeline::first_alarm(&points) {
                Some(t) => println!("{} points, first alarm at {t} s", points.len()),
                None => println!("{} points, no alarm", points.len()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
