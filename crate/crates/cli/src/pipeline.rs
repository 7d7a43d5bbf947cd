//! Pipeline stages over a workdir.
//!
//! Stages talk to each other only through files:
//!
//! ```text
//! data/{train,valid,test}.jsonl      segment
//! segments/{split}.jsonl             segment
//! encoder/                           train-encoder (pretrained encoder only)
//! embeddings/{split}.bin             embed
//! heads/                             train-heads
//! predictions/{system}-{split}.jsonl predict, baseline *
//! reports/                           stats, evaluate
//! ```
//!
//! Every stage records a key (digest of its configuration slice and its inputs'
//! fingerprints) and the fingerprints of its outputs in `manifest.json`. A stage whose key
//! and outputs are unchanged is skipped; a stage whose upstream no longer matches the
//! manifest is refused with the name of the stage to rerun.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use trigwarn_core::baselines::{predict_segment_baseline, TfidfGbtClassifier};
use trigwarn_core::corpus::{corpus_stats, load_corpus, split_holdout, write_corpus, Corpus};
use trigwarn_core::digest::{digest_file, digest_json, digest_parts};
use trigwarn_core::encoder::{ReferenceEncoder, SegmentEncoder};
use trigwarn_core::heads::{train_ensemble, Ensemble, LabeledSequences};
use trigwarn_core::metrics::{report, MetricsReport};
use trigwarn_core::predictions::{align_with_truth, read_predictions, write_predictions, Prediction};
use trigwarn_core::segmenter::{segment_corpus, SegmentedCorpus};
use trigwarn_core::store::{embed_corpus, index_path, EmbeddingStore};
use trigwarn_core::LabelVector;
use trigwarn_transformer::{fine_tune, FineTunedEncoder, TruncationBaseline};

use crate::config::{EncoderKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, StageRecord, WorkdirLock};

pub const SEGMENT: &str = "segment";
pub const TRAIN_ENCODER: &str = "train-encoder";
pub const EMBED: &str = "embed";
pub const TRAIN_HEADS: &str = "train-heads";
pub const PREDICT: &str = "predict";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, clap::ValueEnum)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    /// Whole-document fine-tuning on the first 512 tokens.
    Truncation,
    /// The fine-tuned segment classifier, max-pooled over segments.
    Segment,
    /// TF-IDF n-grams with one boosted-tree classifier per label.
    TfidfGbt,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Truncation => "truncation",
            Baseline::Segment => "segment",
            Baseline::TfidfGbt => "tfidf-gbt",
        }
    }

    /// Stage name in the manifest, as typed on the command line.
    pub fn stage(self) -> String {
        format!("baseline {}", self.name())
    }
}

/// What a stage invocation did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ran(String),
    UpToDate,
}

impl Outcome {
    pub fn describe(&self, stage: &str) -> String {
        match self {
            Outcome::Ran(summary) => format!("{stage}: {summary}"),
            Outcome::UpToDate => format!("{stage}: up to date"),
        }
    }
}

/// Fingerprint of a workdir-relative output: file digest, or for a directory a digest
/// over its sorted file names and contents. `None` when it does not exist.
fn fingerprint_path(path: &Path) -> CliResult<Option<String>> {
    if path.is_file() {
        return Ok(Some(digest_file(path)?));
    }
    if !path.is_dir() {
        return Ok(None);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .with_context(|| format!("listing {}", path.display()))?;
    entries.sort();
    let mut parts = Vec::new();
    for entry in entries {
        let name = entry.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        parts.push(name);
        parts.push(fingerprint_path(&entry)?.unwrap_or_default());
    }
    Ok(Some(digest_parts(parts)))
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn remove_if_exists(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        std::fs::remove_dir_all(path).with_context(|| format!("removing {}", path.display()))?;
    } else if path.exists() {
        std::fs::remove_file(path).with_context(|| format!("removing {}", path.display()))?;
    }
    Ok(())
}

/// Labeled corpus statistics, printed and written to `reports/stats-<name>.json` when a
/// workdir is given.
pub fn stats(corpus: &Corpus, name: &str, reports: Option<&Path>) -> CliResult<String> {
    let s = corpus_stats(corpus)?;
    if let Some(dir) = reports {
        create_dir(dir)?;
        let path = dir.join(format!("stats-{name}.json"));
        let json = serde_json::to_vec_pretty(&s).expect("stats serialize");
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(s.to_string())
}

/// Scores `predictions` against a labeled corpus and writes the report as JSON.
pub fn evaluate(predictions: &Path, truth: &Path, out: Option<&Path>) -> CliResult<MetricsReport> {
    let preds = read_predictions(predictions)?;
    let corpus = load_corpus(truth, true)?;
    let (p, t) = align_with_truth(&preds, &corpus)?;
    let r = report(&p, &t)?;
    if let Some(out) = out {
        if let Some(parent) = out.parent() {
            create_dir(parent)?;
        }
        let json = serde_json::to_vec_pretty(&r).expect("report serializes");
        std::fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(r)
}

/// An open workdir: effective configuration, manifest and exclusive lock.
pub struct Workspace {
    cfg: RunConfig,
    dir: PathBuf,
    manifest: RunManifest,
    _lock: WorkdirLock,
}

impl Workspace {
    pub fn open(cfg: RunConfig) -> CliResult<Self> {
        let dir = cfg.paths.workdir.clone();
        let lock = WorkdirLock::acquire(&dir)?;
        let manifest = RunManifest::load(&dir)?;
        Ok(Workspace {
            cfg,
            dir,
            manifest,
            _lock: lock,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    // ---- layout -------------------------------------------------------------------------

    fn rel(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn data_rel(split: Split) -> String {
        format!("data/{}.jsonl", split.name())
    }

    fn segments_rel(split: Split) -> String {
        format!("segments/{}.jsonl", split.name())
    }

    fn skipped_rel(split: Split) -> String {
        format!("segments/{}.skipped.txt", split.name())
    }

    fn store_rel(split: Split) -> String {
        format!("embeddings/{}.bin", split.name())
    }

    fn store_index_rel(split: Split) -> String {
        format!("embeddings/{}.bin.idx", split.name())
    }

    pub fn predictions_path(&self, system: &str, split: Split) -> PathBuf {
        self.rel(&format!("predictions/{system}-{}.jsonl", split.name()))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.rel("reports")
    }

    pub fn data_path(&self, split: Split) -> PathBuf {
        self.rel(&Self::data_rel(split))
    }

    /// Splits materialized by the last `segment` run.
    fn splits(&self) -> Vec<Split> {
        [Split::Train, Split::Valid, Split::Test]
            .into_iter()
            .filter(|s| self.recorded_output(SEGMENT, &Self::data_rel(*s)).is_some())
            .collect()
    }

    /// Splits to predict on: validation and, when configured, test.
    fn eval_splits(&self) -> Vec<Split> {
        self.splits().into_iter().filter(|s| *s != Split::Train).collect()
    }

    // ---- manifest bookkeeping -----------------------------------------------------------

    fn recorded_output(&self, stage: &str, rel: &str) -> Option<&str> {
        self.manifest
            .stages
            .get(stage)
            .and_then(|r| r.outputs.get(rel))
            .map(String::as_str)
    }

    fn input(&self, stage: &str, rel: &str) -> (String, String) {
        (rel.to_string(), self.recorded_output(stage, rel).unwrap_or("").to_string())
    }

    /// Stages whose outputs `stage` reads, in pipeline order.
    pub fn upstream(&self, stage: &str) -> Vec<String> {
        let pretrained = self.cfg.encoder.kind == EncoderKind::Pretrained;
        let mut up = vec![];
        let mut push = |s: &str| up.push(s.to_string());
        match stage {
            SEGMENT => {}
            TRAIN_ENCODER => push(SEGMENT),
            EMBED | TRAIN_HEADS | PREDICT => {
                push(SEGMENT);
                if pretrained {
                    push(TRAIN_ENCODER);
                }
                if stage != EMBED {
                    push(EMBED);
                }
                if stage == PREDICT {
                    push(TRAIN_HEADS);
                }
            }
            s if s == Baseline::Segment.stage() => {
                push(SEGMENT);
                push(TRAIN_ENCODER);
            }
            _ => push(SEGMENT),
        }
        up
    }

    /// The current key and input fingerprints of `stage`, from configuration, source
    /// files and the manifest records of its upstream stages.
    fn key(&self, stage: &str) -> CliResult<(String, BTreeMap<String, String>)> {
        let cfg = &self.cfg;
        let mut inputs = BTreeMap::new();
        let mut config = String::new();
        match stage {
            SEGMENT => {
                let p = &cfg.paths;
                let train = p
                    .train
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("no training corpus (set paths.train or --train)".into()))?;
                inputs.insert("source/train".into(), self.source_digest(train)?);
                match &p.valid {
                    Some(v) => inputs.insert("source/valid".into(), self.source_digest(v)?),
                    None => inputs.insert(
                        "source/valid".into(),
                        format!("holdout:{}:{}", cfg.holdout_fraction, cfg.seed),
                    ),
                };
                if let Some(t) = &p.test {
                    inputs.insert("source/test".into(), self.source_digest(t)?);
                }
                config = digest_parts([cfg.cleaning.digest(), cfg.segmentation.digest()]);
            }
            TRAIN_ENCODER => {
                inputs.extend([self.input(SEGMENT, &Self::segments_rel(Split::Train))]);
                let pretrained = cfg.checkpoint_dir(&cfg.encoder.fine_tune.model_name);
                inputs.insert("pretrained".into(), self.source_digest(&pretrained)?);
                config = digest_json(&cfg.encoder.fine_tune);
            }
            EMBED => {
                for split in self.splits() {
                    inputs.extend([self.input(SEGMENT, &Self::segments_rel(split))]);
                }
                inputs.insert("encoder".into(), self.encoder_identity());
                config = digest_parts([cfg.cleaning.digest(), cfg.segmentation.digest()]);
            }
            TRAIN_HEADS => {
                for split in [Split::Train, Split::Valid] {
                    inputs.extend([
                        self.input(SEGMENT, &Self::data_rel(split)),
                        self.input(EMBED, &Self::store_rel(split)),
                        self.input(EMBED, &Self::store_index_rel(split)),
                    ]);
                }
                config = digest_parts([
                    digest_json(&cfg.heads.config),
                    digest_json(&cfg.policy()?),
                    cfg.heads.allow_degenerate.to_string(),
                ]);
            }
            PREDICT => {
                inputs.extend([self.input(TRAIN_HEADS, "heads")]);
                for split in self.eval_splits() {
                    inputs.extend([
                        self.input(SEGMENT, &Self::data_rel(split)),
                        self.input(EMBED, &Self::store_rel(split)),
                        self.input(EMBED, &Self::store_index_rel(split)),
                    ]);
                }
            }
            s if s == Baseline::TfidfGbt.stage() => {
                for split in self.splits() {
                    inputs.extend([self.input(SEGMENT, &Self::data_rel(split))]);
                }
                config = digest_parts([cfg.cleaning.digest(), digest_json(&cfg.baselines.tfidf_gbt)]);
            }
            s if s == Baseline::Truncation.stage() => {
                for split in self.splits() {
                    inputs.extend([self.input(SEGMENT, &Self::data_rel(split))]);
                }
                let pretrained = cfg.checkpoint_dir(&cfg.baselines.truncation.model_name);
                inputs.insert("pretrained".into(), self.source_digest(&pretrained)?);
                config = digest_parts([cfg.cleaning.digest(), digest_json(&cfg.baselines.truncation)]);
            }
            s if s == Baseline::Segment.stage() => {
                inputs.extend([self.input(TRAIN_ENCODER, "encoder")]);
                for split in self.eval_splits() {
                    inputs.extend([
                        self.input(SEGMENT, &Self::segments_rel(split)),
                        self.input(SEGMENT, &Self::skipped_rel(split)),
                    ]);
                }
                config = cfg.heads.config.decision_threshold.to_string();
            }
            other => return Err(CliError::Usage(format!("unknown stage `{other}`"))),
        }
        let mut parts = vec![stage.to_string(), config];
        for (k, v) in &inputs {
            parts.push(k.clone());
            parts.push(v.clone());
        }
        Ok((digest_parts(parts), inputs))
    }

    fn source_digest(&self, path: &Path) -> CliResult<String> {
        fingerprint_path(path)?.ok_or_else(|| {
            CliError::Data(anyhow::anyhow!("input {} does not exist", path.display()))
        })
    }

    /// What the embeddings depend on besides the segments.
    fn encoder_identity(&self) -> String {
        match self.cfg.encoder.kind {
            EncoderKind::Reference => format!(
                "reference:dim={}:seed={}",
                self.cfg.encoder.reference_dim, self.cfg.seed
            ),
            EncoderKind::Pretrained => self.recorded_output(TRAIN_ENCODER, "encoder").unwrap_or("").to_string(),
        }
    }

    /// `Ok` when `stage` has a record whose key matches the current inputs and whose
    /// outputs are all present and unmodified.
    fn verify(&self, stage: &str) -> CliResult<()> {
        let record = self
            .manifest
            .stages
            .get(stage)
            .ok_or_else(|| CliError::stale(stage, "it has not completed in this workdir"))?;
        let (key, _) = self.key(stage).map_err(|e| match e {
            CliError::Data(e) => CliError::stale(stage, format!("{e:#}")),
            other => other,
        })?;
        if key != record.key {
            return Err(CliError::stale(
                stage,
                "its configuration or inputs changed since it last ran",
            ));
        }
        for (rel, fp) in &record.outputs {
            match fingerprint_path(&self.rel(rel))? {
                None => return Err(CliError::stale(stage, format!("output {rel} is missing"))),
                Some(found) if &found != fp => {
                    return Err(CliError::stale(stage, format!("output {rel} was modified")))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn verify_upstream(&self, stage: &str) -> CliResult<()> {
        for up in self.upstream(stage) {
            self.verify(&up)?;
        }
        Ok(())
    }

    /// Runs `work` unless the stage is already current. `work` returns the workdir-relative
    /// outputs it produced and a one-line summary.
    fn run_stage<F>(&mut self, stage: &str, work: F) -> CliResult<Outcome>
    where
        F: FnOnce(&Self) -> CliResult<(Vec<String>, String)>,
    {
        self.verify_upstream(stage)?;
        let (key, inputs) = self.key(stage)?;
        if self.manifest.stages.get(stage).is_some_and(|r| r.key == key) && self.verify(stage).is_ok() {
            return Ok(Outcome::UpToDate);
        }
        let started = Instant::now();
        // a failed run must not leave a record that looks current
        if self.manifest.stages.remove(stage).is_some() {
            self.save_manifest()?;
        }
        let (outputs, summary) = work(self)?;
        let mut fingerprints = BTreeMap::new();
        for rel in outputs {
            let fp = fingerprint_path(&self.rel(&rel))?
                .ok_or_else(|| anyhow::anyhow!("stage {stage} did not write {rel}"))?;
            fingerprints.insert(rel, fp);
        }
        self.manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                key,
                inputs,
                outputs: fingerprints,
                seconds: started.elapsed().as_secs_f64(),
                finished_unix: now_unix(),
            },
        );
        self.save_manifest()?;
        Ok(Outcome::Ran(summary))
    }

    fn save_manifest(&mut self) -> CliResult<()> {
        self.manifest.version = env!("CARGO_PKG_VERSION").to_string();
        self.manifest.config_digest = digest_json(&self.cfg);
        self.manifest.config = Some(self.cfg.clone());
        self.manifest.save(&self.dir)
    }

    // ---- stages ---------------------------------------------------------------------------

    /// Materializes the splits under `data/` and writes their segments.
    pub fn segment(&mut self) -> CliResult<Outcome> {
        self.run_stage(SEGMENT, |ws| {
            let cfg = &ws.cfg;
            let train_path = cfg.paths.train.as_ref().expect("checked by key");
            let train = load_corpus(train_path, true)?;
            let (train, valid) = match &cfg.paths.valid {
                Some(v) => (train, load_corpus(v, true)?),
                None => split_holdout(&train, cfg.holdout_fraction, cfg.seed)?,
            };
            let test = cfg.paths.test.as_ref().map(|t| load_corpus(t, false)).transpose()?;
            create_dir(&ws.rel("data"))?;
            create_dir(&ws.rel("segments"))?;
            let mut outputs = vec![];
            let mut summary = vec![];
            let splits = [(Split::Train, Some(train)), (Split::Valid, Some(valid)), (Split::Test, test)];
            for (split, corpus) in splits {
                let Some(corpus) = corpus else {
                    for rel in [Self::data_rel(split), Self::segments_rel(split), Self::skipped_rel(split)] {
                        remove_if_exists(&ws.rel(&rel))?;
                    }
                    continue;
                };
                write_corpus(&ws.rel(&Self::data_rel(split)), &corpus)?;
                let segs = segment_corpus(&corpus, &cfg.cleaning, &cfg.segmentation)?;
                segs.write(&ws.rel(&Self::segments_rel(split)))?;
                segs.write_skip_report(&ws.rel(&Self::skipped_rel(split)))?;
                summary.push(format!(
                    "{} {} documents → {} segments ({} skipped)",
                    split.name(),
                    corpus.len(),
                    segs.n_segments(),
                    segs.skipped.len()
                ));
                outputs.extend([Self::data_rel(split), Self::segments_rel(split), Self::skipped_rel(split)]);
            }
            Ok((outputs, summary.join("; ")))
        })
    }

    fn read_segments(&self, split: Split) -> CliResult<SegmentedCorpus> {
        let mut segs = SegmentedCorpus::read(&self.rel(&Self::segments_rel(split)))?;
        let skipped = self.rel(&Self::skipped_rel(split));
        let text = std::fs::read_to_string(&skipped).with_context(|| format!("reading {}", skipped.display()))?;
        segs.skipped = text.lines().filter(|l| !l.is_empty()).map(String::from).collect();
        Ok(segs)
    }

    fn read_data(&self, split: Split) -> CliResult<Corpus> {
        Ok(load_corpus(&self.data_path(split), split != Split::Test)?)
    }

    /// Fine-tunes the pretrained encoder on label-inherited training segments.
    pub fn train_encoder(&mut self) -> CliResult<Outcome> {
        if self.cfg.encoder.kind == EncoderKind::Reference {
            return Ok(Outcome::Ran("not needed with the reference encoder".into()));
        }
        self.run_stage(TRAIN_ENCODER, |ws| {
            let segs = ws.read_segments(Split::Train)?;
            let ft = &ws.cfg.encoder.fine_tune;
            let pretrained = ws.cfg.checkpoint_dir(&ft.model_name);
            let out = ws.rel("encoder");
            remove_if_exists(&out)?;
            let log = fine_tune(&segs, ft, &pretrained, &out)?;
            let last = log.epochs.last().map(|e| e.loss).unwrap_or(f64::NAN);
            Ok((
                vec!["encoder".into()],
                format!(
                    "{} segments, {} epochs, final loss {last:.4}",
                    log.n_examples,
                    log.epochs.len()
                ),
            ))
        })
    }

    fn encoder(&self) -> CliResult<Box<dyn SegmentEncoder>> {
        Ok(match self.cfg.encoder.kind {
            EncoderKind::Reference => Box::new(ReferenceEncoder::new(self.cfg.encoder.reference_dim, self.cfg.seed)?),
            EncoderKind::Pretrained => Box::new(FineTunedEncoder::load(&self.rel("encoder"))?),
        })
    }

    /// Embeds every segment of every split into `embeddings/`.
    pub fn embed(&mut self) -> CliResult<Outcome> {
        self.run_stage(EMBED, |ws| {
            let encoder = ws.encoder()?;
            let mut outputs = vec![];
            let mut computed = 0;
            for split in ws.splits() {
                let segs = ws.read_segments(split)?;
                let path = ws.rel(&Self::store_rel(split));
                remove_if_exists(&path)?;
                remove_if_exists(&index_path(&path))?;
                let (_, r) = embed_corpus(encoder.as_ref(), &segs, &ws.cfg.segmentation, &ws.cfg.cleaning, &path)?;
                computed += r.computed_segments;
                outputs.extend([Self::store_rel(split), Self::store_index_rel(split)]);
            }
            Ok((outputs, format!("{computed} segments embedded (dim {})", encoder.dim())))
        })
    }

    /// Trains the 32 recurrent heads with per-head epoch selection on validation.
    pub fn train_heads(&mut self) -> CliResult<Outcome> {
        self.run_stage(TRAIN_HEADS, |ws| {
            let cfg = &ws.cfg;
            let policy = cfg.policy()?;
            let train_store = EmbeddingStore::open(&ws.rel(&Self::store_rel(Split::Train)))?;
            let valid_store = EmbeddingStore::open(&ws.rel(&Self::store_rel(Split::Valid)))?;
            let train = LabeledSequences::align(&train_store, &ws.read_data(Split::Train)?.label_map())?;
            let valid = LabeledSequences::align(&valid_store, &ws.read_data(Split::Valid)?.label_map())?;
            let ensemble = train_ensemble(&train, &valid, &cfg.heads.config, &policy, cfg.heads.allow_degenerate)?;
            let dir = ws.rel("heads");
            remove_if_exists(&dir)?;
            ensemble.save(&dir, train_store.fingerprint(), train_store.dim(), &cfg.heads.config, &policy)?;
            let trained = ensemble
                .heads()
                .iter()
                .filter(|h| matches!(h.model, trigwarn_core::heads::HeadModel::Recurrent(_)))
                .count();
            Ok((
                vec!["heads".into()],
                format!("{trained} recurrent heads on {} documents", train.len()),
            ))
        })
    }

    /// Writes `predictions/heads-{split}.jsonl` for validation and test.
    pub fn predict(&mut self) -> CliResult<Outcome> {
        self.run_stage(PREDICT, |ws| {
            let (ensemble, manifest) = Ensemble::load(&ws.rel("heads"))?;
            create_dir(&ws.rel("predictions"))?;
            let mut outputs = vec![];
            let mut summary = vec![];
            for split in ws.eval_splits() {
                let store = EmbeddingStore::open(&ws.rel(&Self::store_rel(split)))?;
                if store.fingerprint() != manifest.store_fingerprint {
                    return Err(CliError::stale(TRAIN_HEADS, "heads were trained on different embeddings"));
                }
                let corpus = ws.read_data(split)?;
                let preds = predict_with_heads(&ensemble, &store, &corpus)?;
                let path = ws.predictions_path("heads", split);
                write_predictions(&path, &preds)?;
                summary.push(format!("{} {} documents", split.name(), preds.len()));
                outputs.push(relative(&ws.dir, &path));
            }
            Ok((outputs, summary.join(", ")))
        })
    }

    pub fn baseline(&mut self, which: Baseline) -> CliResult<Outcome> {
        let stage = which.stage();
        self.run_stage(&stage, |ws| {
            create_dir(&ws.rel("predictions"))?;
            let mut outputs = vec![];
            let mut predictions: Vec<(Split, Vec<Prediction>)> = vec![];
            match which {
                Baseline::TfidfGbt => {
                    let train = ws.read_data(Split::Train)?;
                    let model = TfidfGbtClassifier::train(&train, &ws.cfg.cleaning, &ws.cfg.baselines.tfidf_gbt)?;
                    create_dir(&ws.rel("baselines"))?;
                    model.save(&ws.rel("baselines/tfidf-gbt.json"))?;
                    outputs.push("baselines/tfidf-gbt.json".to_string());
                    for split in ws.eval_splits() {
                        predictions.push((split, model.predict_corpus(&ws.read_data(split)?)));
                    }
                }
                Baseline::Truncation => {
                    let train = ws.read_data(Split::Train)?;
                    let tcfg = &ws.cfg.baselines.truncation;
                    let pretrained = ws.cfg.checkpoint_dir(&tcfg.model_name);
                    let out = ws.rel("baselines/truncation");
                    remove_if_exists(&out)?;
                    let (model, _) = TruncationBaseline::train(&train, tcfg, &ws.cfg.cleaning, &pretrained, &out)?;
                    outputs.push("baselines/truncation".to_string());
                    for split in ws.eval_splits() {
                        predictions.push((split, model.predict_corpus(&ws.read_data(split)?)?));
                    }
                }
                Baseline::Segment => {
                    let encoder = FineTunedEncoder::load(&ws.rel("encoder"))?;
                    let threshold = ws.cfg.heads.config.decision_threshold as f32;
                    for split in ws.eval_splits() {
                        let preds = predict_segment_baseline(&encoder, &ws.read_segments(split)?, threshold)?;
                        predictions.push((split, preds));
                    }
                }
            }
            let mut summary = vec![];
            for (split, preds) in predictions {
                let path = ws.predictions_path(which.name(), split);
                write_predictions(&path, &preds)?;
                summary.push(format!("{} {} documents", split.name(), preds.len()));
                outputs.push(relative(&ws.dir, &path));
            }
            Ok((outputs, summary.join(", ")))
        })
    }

    /// Scores `system`'s validation predictions; the report goes to `reports/`.
    pub fn evaluate_system(&self, system: &str) -> CliResult<MetricsReport> {
        let preds = self.predictions_path(system, Split::Valid);
        if !preds.exists() {
            return Err(CliError::Data(anyhow::anyhow!(
                "no predictions at {}; run `trigwarn predict` or `trigwarn baseline {system}` first",
                preds.display()
            )));
        }
        let report_path = self.reports_dir().join(format!("{system}-valid.metrics.json"));
        evaluate(&preds, &self.data_path(Split::Valid), Some(&report_path))
    }
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

/// Predictions in corpus order. Documents without embeddings (empty after cleaning) are
/// predicted to carry no warnings.
pub fn predict_with_heads(ensemble: &Ensemble, store: &EmbeddingStore, corpus: &Corpus) -> CliResult<Vec<Prediction>> {
    let mut out = Vec::with_capacity(corpus.len());
    let by_id: HashMap<&str, usize> = store.doc_ids().enumerate().map(|(i, id)| (id, i)).collect();
    for doc in corpus.iter() {
        let labels = match by_id.get(doc.id.as_str()) {
            Some(&i) => ensemble.predict(&store.get(i))?,
            None => {
                log::warn!("{}: no segments; predicting no warnings", doc.id);
                LabelVector::EMPTY
            }
        };
        out.push(Prediction {
            work_id: doc.id.clone(),
            labels,
        });
    }
    Ok(out)
}
