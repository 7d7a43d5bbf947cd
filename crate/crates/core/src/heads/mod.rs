//! One-vs-all recurrent heads over embedding sequences.
//!
//! Each of the 32 classes gets an independent [`RecurrentHead`], trained with SGD on
//! weighted binary cross-entropy. Classes in the [`WeightPolicy`] set use
//! `pos_weight = n_neg / n_pos` from the training split. After every epoch the head is
//! scored on the validation split and the best epoch's weights are kept.

mod loss;
mod lstm;
mod persist;

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use loss::{
    batch_loss_sum, positive_class_weight, sigmoid, weighted_bce, weighted_bce_grad_logit,
    weighted_bce_with_logit, PROB_EPSILON,
};
pub use lstm::RecurrentHead;
pub use persist::{ClassEntry, EnsembleManifest};

use crate::encoder::EmbeddingSequence;
use crate::labels::{LabelVector, TriggerClass, NUM_CLASSES};
use crate::metrics::ConfusionCounts;
use crate::store::EmbeddingStore;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub hidden_size: usize,
    /// Documents per SGD step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Fixed weight for the policy's classes instead of the count-based ratio.
    pub pos_weight: Option<f64>,
    pub decision_threshold: f64,
    /// Rescale each batch's mean gradient to at most this L2 norm; `None` is plain SGD.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden_size: 100,
            batch_size: 8,
            learning_rate: 0.01,
            max_epochs: 10,
            pos_weight: None,
            decision_threshold: 0.5,
            max_grad_norm: None,
            seed: 42,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.hidden_size == 0 {
            return bad("hidden_size must be >= 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if matches!(self.pos_weight, Some(w) if !(w > 0.0)) {
            return bad("pos_weight must be positive");
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return bad("decision_threshold must be in (0, 1)");
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// Which classes get a positive-class weight, by 1-based class number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightPolicy {
    pub weighted_classes: BTreeSet<usize>,
}

impl Default for WeightPolicy {
    fn default() -> Self {
        WeightPolicy {
            weighted_classes: (15..=32).collect(),
        }
    }
}

impl WeightPolicy {
    pub fn none() -> Self {
        WeightPolicy {
            weighted_classes: BTreeSet::new(),
        }
    }

    pub fn all() -> Self {
        WeightPolicy {
            weighted_classes: (1..=NUM_CLASSES).collect(),
        }
    }

    /// Parse `"15-32"`, `"3,5,20-22"` or `"none"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut set = BTreeSet::new();
        let spec = spec.trim();
        if spec.is_empty() || spec == "none" {
            return Ok(WeightPolicy::none());
        }
        let bad = || Error::InvalidConfig(format!("invalid class set `{spec}`"));
        for part in spec.split(',') {
            let part = part.trim();
            let (lo, hi) = match part.split_once('-') {
                Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
                None => {
                    let n = part.parse().map_err(|_| bad())?;
                    (n, n)
                }
            };
            let (lo, hi): (usize, usize) = (lo, hi);
            if lo == 0 || hi > NUM_CLASSES || lo > hi {
                return Err(bad());
            }
            set.extend(lo..=hi);
        }
        Ok(WeightPolicy {
            weighted_classes: set,
        })
    }

    pub fn applies_to(&self, class: TriggerClass) -> bool {
        self.weighted_classes.contains(&class.number())
    }
}

/// Embedding sequences paired with their document labels, in store order.
pub struct LabeledSequences<'a> {
    store: &'a EmbeddingStore,
    labels: Vec<LabelVector>,
    preloaded: Option<Vec<EmbeddingSequence>>,
}

/// Stores up to this many floats are decoded once and kept in memory.
const PRELOAD_LIMIT_FLOATS: usize = 1 << 28;

impl<'a> LabeledSequences<'a> {
    pub fn align(store: &'a EmbeddingStore, labels: &HashMap<String, LabelVector>) -> Result<Self> {
        let labels = store
            .doc_ids()
            .map(|id| {
                labels
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Misaligned(format!("no labels for document `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let floats: usize = store
            .entries()
            .iter()
            .map(|e| e.n_segments as usize * store.dim())
            .sum();
        let preloaded = (floats <= PRELOAD_LIMIT_FLOATS).then(|| store.iter().collect());
        Ok(LabeledSequences {
            store,
            labels,
            preloaded,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.store.dim()
    }

    pub fn labels(&self) -> &[LabelVector] {
        &self.labels
    }

    pub fn sequence(&self, i: usize) -> Cow<'_, EmbeddingSequence> {
        match &self.preloaded {
            Some(all) => Cow::Borrowed(&all[i]),
            None => Cow::Owned(self.store.get(i)),
        }
    }

    pub fn store_fingerprint(&self) -> &str {
        self.store.fingerprint()
    }

    pub fn positives(&self, class: TriggerClass) -> usize {
        self.labels.iter().filter(|l| l.contains(class)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Positive-class F1 on the validation split; drives epoch selection.
    pub valid_f1: f64,
    /// Mean of positive- and negative-class F1, logged for comparison.
    pub valid_f1_macro: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadModel {
    Recurrent(RecurrentHead),
    /// Stand-in for a class with no training positives; always predicts negative.
    ConstantNegative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub class: TriggerClass,
    pub model: HeadModel,
    /// 1-based; 0 for constant heads.
    pub selected_epoch: usize,
    pub validation_f1: f64,
    pub pos_weight: Option<f64>,
    pub threshold: f64,
    pub curve: Vec<EpochRecord>,
}

impl TrainedHead {
    pub fn constant_negative(class: TriggerClass, threshold: f64) -> Self {
        TrainedHead {
            class,
            model: HeadModel::ConstantNegative,
            selected_epoch: 0,
            validation_f1: 0.0,
            pos_weight: None,
            threshold,
            curve: Vec::new(),
        }
    }

    pub fn probability(&self, seq: &EmbeddingSequence) -> Result<f32> {
        match &self.model {
            HeadModel::Recurrent(head) => head.probability(seq.view()),
            HeadModel::ConstantNegative => Ok(0.0),
        }
    }

    pub fn predict(&self, seq: &EmbeddingSequence) -> Result<bool> {
        Ok(self.probability(seq)? as f64 >= self.threshold)
    }
}

/// 1-based epoch with the highest score; ties go to the earliest.
pub fn select_epoch(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i + 1)
}

fn head_rng(seed: u64, class: TriggerClass) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class.number() as u64);
    rng
}

fn evaluate(
    head: &RecurrentHead,
    data: &LabeledSequences<'_>,
    class: TriggerClass,
    threshold: f64,
) -> Result<ConfusionCounts> {
    let mut counts = ConfusionCounts::default();
    for i in 0..data.len() {
        let p = head.probability(data.sequence(i).view())? as f64;
        counts.add(p >= threshold, data.labels[i].contains(class));
    }
    Ok(counts)
}

/// Train the one-vs-all head for `class`.
pub fn train_head(
    class: TriggerClass,
    train: &LabeledSequences<'_>,
    valid: &LabeledSequences<'_>,
    cfg: &HeadConfig,
    policy: &WeightPolicy,
) -> Result<TrainedHead> {
    cfg.validate()?;
    if train.dim() != valid.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: valid.dim(),
        });
    }
    let n_pos = train.positives(class);
    if n_pos == 0 {
        return Err(Error::NoPositives(class.name().to_string()));
    }
    let pos_weight = if policy.applies_to(class) {
        Some(match cfg.pos_weight {
            Some(w) => w,
            None => positive_class_weight(n_pos, train.len() - n_pos)?,
        })
    } else {
        None
    };
    let w = pos_weight.unwrap_or(1.0);

    let mut rng = head_rng(cfg.seed, class);
    let mut head = RecurrentHead::init(train.dim(), cfg.hidden_size, &mut rng);
    let mut grads = RecurrentHead::zeros(train.dim(), cfg.hidden_size);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, RecurrentHead)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            for &i in batch {
                let target = if train.labels[i].contains(class) { 1.0 } else { 0.0 };
                let seq = train.sequence(i);
                let logit = head.accumulate_gradients(
                    seq.view(),
                    |z| weighted_bce_grad_logit(z as f64, target, w) as f32,
                    &mut grads,
                )?;
                epoch_loss += weighted_bce_with_logit(logit as f64, target, w);
            }
            // mean reduction over the batch
            let mut scale = 1.0 / batch.len() as f32;
            if let Some(max_norm) = cfg.max_grad_norm {
                let norm = grads.norm() * scale;
                if norm > max_norm as f32 {
                    scale *= max_norm as f32 / norm;
                }
            }
            head.scaled_add(-(cfg.learning_rate as f32) * scale, &grads);
        }
        let counts = evaluate(&head, valid, class, cfg.decision_threshold)?;
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            valid_f1: counts.f1(),
            valid_f1_macro: counts.binary_macro_f1(),
        };
        log::debug!(
            "{class}: epoch {epoch} loss {:.5} valid F1 {:.4} (macro {:.4})",
            record.train_loss,
            record.valid_f1,
            record.valid_f1_macro
        );
        if best.as_ref().map_or(true, |(f1, _)| record.valid_f1 > *f1) {
            best = Some((record.valid_f1, head.clone()));
        }
        curve.push(record);
    }

    let scores: Vec<f64> = curve.iter().map(|r| r.valid_f1).collect();
    let selected_epoch = select_epoch(&scores).expect("at least one epoch");
    let (validation_f1, model) = best.expect("at least one epoch");
    Ok(TrainedHead {
        class,
        model: HeadModel::Recurrent(model),
        selected_epoch,
        validation_f1,
        pos_weight,
        threshold: cfg.decision_threshold,
        curve,
    })
}

/// Exactly one head per class, index-aligned with the label vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    heads: Vec<TrainedHead>,
}

impl Ensemble {
    pub fn new(mut heads: Vec<TrainedHead>) -> Result<Self> {
        heads.sort_by_key(|h| h.class);
        let complete = heads.len() == NUM_CLASSES
            && heads.iter().enumerate().all(|(i, h)| h.class.index() == i);
        if !complete {
            return Err(Error::InvalidConfig(
                "an ensemble needs exactly one head per class".into(),
            ));
        }
        Ok(Ensemble { heads })
    }

    pub fn heads(&self) -> &[TrainedHead] {
        &self.heads
    }

    pub fn head(&self, class: TriggerClass) -> &TrainedHead {
        &self.heads[class.index()]
    }

    /// Replace one class's head; the others are untouched.
    pub fn replace(&mut self, head: TrainedHead) {
        let i = head.class.index();
        self.heads[i] = head;
    }

    pub fn probabilities(&self, seq: &EmbeddingSequence) -> Result<Vec<f32>> {
        self.heads.iter().map(|h| h.probability(seq)).collect()
    }

    /// Bit `k` set iff head `k`'s probability is at least its threshold.
    pub fn predict(&self, seq: &EmbeddingSequence) -> Result<LabelVector> {
        let mut out = LabelVector::EMPTY;
        for head in &self.heads {
            out.set(head.class, head.predict(seq)?);
        }
        Ok(out)
    }
}

/// Train all 32 heads independently, in parallel.
///
/// A class without training positives fails the run unless `allow_degenerate`, in which
/// case it gets a constant-negative head.
pub fn train_ensemble(
    train: &LabeledSequences<'_>,
    valid: &LabeledSequences<'_>,
    cfg: &HeadConfig,
    policy: &WeightPolicy,
    allow_degenerate: bool,
) -> Result<Ensemble> {
    cfg.validate()?;
    let heads = TriggerClass::all()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|class| {
            if train.positives(class) == 0 {
                if allow_degenerate {
                    log::warn!("{class}: no training positives; using a constant-negative head");
                    return Ok(TrainedHead::constant_negative(class, cfg.decision_threshold));
                }
                return Err(Error::NoPositives(class.name().to_string()));
            }
            let head = train_head(class, train, valid, cfg, policy)?;
            log::info!(
                "{class}: selected epoch {} with validation F1 {:.4}",
                head.selected_epoch,
                head.validation_f1
            );
            Ok(head)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(heads)
}
