//! Synthetic corpora with known signal, and the run settings that go with them.
//!
//! `e2e` plants class markers anywhere in the text: the hierarchical pipeline with the
//! reference encoder should recover every active class. `planted-tail` plants them only
//! past content word 600, out of reach of any model that reads the first 512 tokens.
//! `imbalance` is a two-class corpus whose rare class sits at 1% with noisy labels.

use std::path::{Path, PathBuf};

use trigwarn_core::corpus::{write_corpus, Corpus};
use trigwarn_core::segmenter::{clean_text, CleaningConfig};
use trigwarn_core::synthetic::{generate, ClassSpec, MarkerPlacement, SyntheticConfig};
use trigwarn_core::TriggerClass;
use trigwarn_transformer::checkpoint::init_checkpoint;
use trigwarn_transformer::ModelConfig;

use crate::config::{EncoderKind, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    E2e,
    PlantedTail,
    Imbalance,
}

/// Eight active classes, one of them at 1% prevalence.
pub const E2E_CLASSES: [(usize, f64); 8] =
    [(1, 0.5), (3, 0.2), (6, 0.15), (9, 0.1), (12, 0.3), (16, 0.05), (20, 0.1), (32, 0.01)];

/// Content position after which `planted-tail` markers appear.
pub const TAIL_START: usize = 600;

/// The rare class of the `imbalance` preset.
pub const RARE_CLASS: usize = 20;

fn specs(classes: &[(usize, f64)]) -> Vec<ClassSpec> {
    classes
        .iter()
        .map(|&(c, prevalence)| ClassSpec {
            class: TriggerClass::from_number(c).expect("preset classes are valid"),
            prevalence,
        })
        .collect()
}

/// Generator settings for one split. Train and validation differ only in seed and id prefix.
pub fn corpus_config(preset: Preset, seed: u64, prefix: &str) -> SyntheticConfig {
    let base = SyntheticConfig {
        n_documents: 500,
        classes: specs(&E2E_CLASSES),
        marker_rate: 0.15,
        markers_per_class: 2,
        id_prefix: prefix.to_string(),
        seed,
        ..Default::default()
    };
    match preset {
        Preset::E2e => base,
        Preset::PlantedTail => SyntheticConfig {
            n_documents: 300,
            min_words: 950,
            max_words: 1150,
            classes: specs(&[(1, 0.5), (4, 0.25), (8, 0.25), (17, 0.25)]),
            placement: MarkerPlacement::After(TAIL_START),
            ..base
        },
        Preset::Imbalance => SyntheticConfig {
            classes: specs(&[(1, 0.5), (RARE_CLASS, 0.01)]),
            // stays as weak as the signal in the rarest e2e class
            marker_rate: 0.03,
            label_noise: 0.005,
            ..base
        },
    }
}

/// Train and validation corpora for a preset, generated from seeds `2·seed + 1` and `2·seed + 2`.
pub fn corpora(preset: Preset, seed: u64) -> CliResult<(Corpus, Corpus)> {
    let train = generate(&corpus_config(preset, 2 * seed + 1, "tr"))?;
    let valid = generate(&corpus_config(preset, 2 * seed + 2, "va"))?;
    Ok((train, valid))
}

/// Run settings tuned for these corpus sizes (hundreds of documents, not hundreds of
/// thousands): larger head learning rate, more epochs, and gradient-norm clipping so the
/// heavily weighted rare classes do not diverge.
pub fn run_config(preset: Preset, workdir: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.paths.workdir = workdir.to_path_buf();
    cfg.encoder.kind = EncoderKind::Reference;
    cfg.encoder.reference_dim = 256;
    cfg.heads.config.learning_rate = 0.2;
    cfg.heads.config.max_epochs = 20;
    cfg.heads.config.max_grad_norm = Some(5.0);
    cfg.heads.allow_degenerate = true;
    if preset == Preset::PlantedTail {
        cfg.baselines.truncation.learning_rate = 1e-3;
    }
    cfg
}

/// Seeded small transformer with a word-level vocabulary covering `corpus`.
pub fn write_tiny_checkpoint(dir: &Path, corpus: &Corpus, cleaning: &CleaningConfig, seed: u64) -> CliResult<PathBuf> {
    let words: std::collections::BTreeSet<String> =
        corpus.iter().flat_map(|d| clean_text(&d.text, cleaning)).collect();
    let words: Vec<String> = words.into_iter().collect();
    Ok(init_checkpoint(dir, ModelConfig::tiny(0), &words, seed)?)
}

/// Writes `train.jsonl`, `valid.jsonl`, a small checkpoint under `models/tiny` and a
/// `run.toml` that points at all of them, and returns the config path.
pub fn materialize(preset: Preset, seed: u64, out: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| anyhow::anyhow!("creating {}: {e}", out.display()))?;
    let out = out
        .canonicalize()
        .map_err(|e| anyhow::anyhow!("resolving {}: {e}", out.display()))?;
    let (train, valid) = corpora(preset, seed)?;
    write_corpus(&out.join("train.jsonl"), &train)?;
    write_corpus(&out.join("valid.jsonl"), &valid)?;
    let mut cfg = run_config(preset, &out.join("work"));
    cfg.seed = seed;
    cfg.paths.train = Some(out.join("train.jsonl"));
    cfg.paths.valid = Some(out.join("valid.jsonl"));
    let model = write_tiny_checkpoint(&out.join("models").join("tiny"), &train, &cfg.cleaning, seed)?;
    let model = model.to_string_lossy().into_owned();
    cfg.encoder.fine_tune.model_name = model.clone();
    cfg.baselines.truncation.model_name = model;
    let path = out.join("run.toml");
    let text = toml::to_string(&cfg).map_err(|e| anyhow::anyhow!("serializing config: {e}"))?;
    std::fs::write(&path, text).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
    Ok(path)
}
