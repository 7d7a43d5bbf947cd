//! Multi-label fine-tuning loop shared by the segment encoder and the truncation baseline.
//!
//! AdamW (β = 0.9/0.999, ε = 1e-8, no weight decay) with the learning rate decayed
//! linearly to zero over all steps, no warmup. Example order and dropout masks come from
//! seeded generators, so a rerun with the same seed retraces the same trajectory.

use std::path::Path;

use candle_core::{Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trigwarn_core::{LabelVector, NUM_CLASSES};

use crate::checkpoint::LoadedModel;
use crate::model::{multilabel_bce, Dropout};
use crate::{Error, Result};

pub const TRAINING_LOG_FILE: &str = "training_log.json";

/// One tokenized training input with its label set.
#[derive(Debug, Clone)]
pub struct Example {
    pub ids: Vec<u32>,
    pub labels: LabelVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-example loss (summed over the 32 labels) across the epoch's batches.
    pub loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub n_examples: usize,
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("log serializes");
        std::fs::write(path, json).map_err(|e| Error::checkpoint(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::checkpoint(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::checkpoint(path, e))
    }
}

pub(crate) fn targets(labels: &[LabelVector]) -> Result<Tensor> {
    let data: Vec<f32> = labels
        .iter()
        .flat_map(|l| (0..NUM_CLASSES).map(move |k| if l.bits() >> k & 1 == 1 { 1.0 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(data, (labels.len(), NUM_CLASSES), &Device::Cpu)?)
}

pub fn train_classifier(loaded: &LoadedModel, examples: &[Example], s: &TrainSettings) -> Result<TrainingLog> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let params = ParamsAdamW {
        lr: s.learning_rate,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.0,
    };
    let mut opt = AdamW::new(loaded.varmap.all_vars(), params)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(s.seed);
    dropout_rng.set_stream(1);
    let steps_per_epoch = examples.len().div_ceil(s.batch_size);
    let total = (steps_per_epoch * s.epochs) as f64;
    let mut step = 0usize;
    let mut log = TrainingLog {
        n_examples: examples.len(),
        optimizer: "adamw(beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0), linear decay, no warmup".into(),
        learning_rate: s.learning_rate,
        batch_size: s.batch_size,
        seed: s.seed,
        epochs: Vec::with_capacity(s.epochs),
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=s.epochs {
        order.shuffle(&mut order_rng);
        let mut sum = 0.0;
        for chunk in order.chunks(s.batch_size) {
            opt.set_learning_rate(s.learning_rate * (1.0 - step as f64 / total));
            let ids: Vec<Vec<u32>> = chunk.iter().map(|&i| examples[i].ids.clone()).collect();
            let labels: Vec<LabelVector> = chunk.iter().map(|&i| examples[i].labels).collect();
            let mut drop = Dropout::train(&mut dropout_rng);
            let logits = loaded.model.logits(&ids, &mut drop)?;
            let loss = multilabel_bce(&logits, &targets(&labels)?)?;
            opt.backward_step(&loss)?;
            sum += loss.to_scalar::<f32>()? as f64;
            step += 1;
        }
        let entry = EpochLog {
            epoch,
            loss: sum / steps_per_epoch as f64,
            steps: steps_per_epoch,
        };
        log::info!("fine-tune epoch {epoch}: loss {:.5}", entry.loss);
        log.epochs.push(entry);
    }
    Ok(log)
}
