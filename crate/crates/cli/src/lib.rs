//! `trigwarn`: the staged command-line pipeline.
//!
//! `segment → [train-encoder] → embed → train-heads → predict → evaluate`, plus three
//! baselines. Each stage reads and writes files in one workdir and records what it did in
//! the workdir's manifest, so reruns skip finished work and stale inputs are caught.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod presets;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use trigwarn_core::corpus::{load_corpus, load_split_corpus};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{Baseline, Outcome, Workspace};
use crate::presets::Preset;

#[derive(Debug, Parser)]
#[command(name = "trigwarn", version, about = "Hierarchical multi-label trigger-warning classification")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Log progress (`RUST_LOG` takes precedence).
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Document count, mean length and per-class positive ratios of a labeled corpus.
    Stats {
        /// Corpus file; defaults to the configured training corpus.
        corpus: Option<PathBuf>,
        /// Separate labels file; `corpus` then holds only ids and texts.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Clean and window every split into segments.
    Segment,
    /// Fine-tune the pretrained encoder on label-inherited segments.
    TrainEncoder,
    /// Embed every segment into the workdir's embedding stores.
    Embed,
    /// Train one recurrent head per class.
    TrainHeads,
    /// Predict validation (and test) documents with the trained heads.
    Predict,
    /// Score a predictions file against a labeled corpus.
    Evaluate {
        /// Defaults to the heads' validation predictions in the workdir.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Defaults to the workdir's validation split.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Where to write the JSON report; defaults under `<workdir>/reports`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train and apply a comparison system.
    Baseline {
        #[arg(value_enum)]
        name: Baseline,
    },
    /// All stages in order, then evaluation of the heads on validation.
    Run,
    /// Write a synthetic corpus with planted signal, a small checkpoint and a run config.
    Synth {
        #[arg(long, value_enum, default_value = "e2e")]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_outcome(stage: &str, outcome: CliResult<Outcome>) -> CliResult<()> {
    println!("{}", outcome?.describe(stage));
    Ok(())
}

/// Executes one command; everything user-visible goes to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    if let Command::Synth { preset, out } = &cli.command {
        let seed = cli.overrides.seed.unwrap_or(RunConfig::default().seed);
        let path = presets::materialize(*preset, seed, out)?;
        println!("wrote {}; next: trigwarn --config {} run", out.display(), path.display());
        return Ok(());
    }
    let cfg = RunConfig::resolve(&cli.overrides)?;
    match cli.command {
        Command::Stats { corpus, labels } => {
            let path = corpus
                .or_else(|| cfg.paths.train.clone())
                .ok_or_else(|| CliError::Usage("no corpus given (positional argument or --train)".into()))?;
            let corpus = match &labels {
                Some(l) => load_split_corpus(&path, l)?,
                None => load_corpus(&path, true)?,
            };
            let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let ws = Workspace::open(cfg)?;
            print!("{}", pipeline::stats(&corpus, &name, Some(&ws.reports_dir()))?);
            Ok(())
        }
        Command::Evaluate {
            predictions,
            truth,
            report,
        } => {
            let ws = Workspace::open(cfg)?;
            let predictions = predictions.unwrap_or_else(|| ws.predictions_path("heads", pipeline::Split::Valid));
            let truth = truth.unwrap_or_else(|| ws.data_path(pipeline::Split::Valid));
            let stem = predictions.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let report = report.unwrap_or_else(|| ws.reports_dir().join(format!("{stem}.metrics.json")));
            let r = pipeline::evaluate(&predictions, &truth, Some(&report))?;
            print!("{r}");
            println!("report: {}", report.display());
            Ok(())
        }
        Command::Run => {
            let mut ws = Workspace::open(cfg)?;
            print_outcome(pipeline::SEGMENT, ws.segment())?;
            print_outcome(pipeline::TRAIN_ENCODER, ws.train_encoder())?;
            print_outcome(pipeline::EMBED, ws.embed())?;
            print_outcome(pipeline::TRAIN_HEADS, ws.train_heads())?;
            print_outcome(pipeline::PREDICT, ws.predict())?;
            let r = ws.evaluate_system("heads")?;
            print!("{r}");
            Ok(())
        }
        Command::Synth { .. } => unreachable!("handled above"),
        stage => {
            let mut ws = Workspace::open(cfg)?;
            match stage {
                Command::Segment => print_outcome(pipeline::SEGMENT, ws.segment()),
                Command::TrainEncoder => print_outcome(pipeline::TRAIN_ENCODER, ws.train_encoder()),
                Command::Embed => print_outcome(pipeline::EMBED, ws.embed()),
                Command::TrainHeads => print_outcome(pipeline::TRAIN_HEADS, ws.train_heads()),
                Command::Predict => print_outcome(pipeline::PREDICT, ws.predict()),
                Command::Baseline { name } => print_outcome(&name.stage(), ws.baseline(name)),
                _ => unreachable!("handled above"),
            }
        }
    }
}
