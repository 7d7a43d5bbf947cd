//! Whole-document baseline: the cleaned text is tokenized, everything past `max_tokens`
//! is dropped, and a 32-way sigmoid head sits on the first token.

use std::path::{Path, PathBuf};

use candle_nn::ops::sigmoid;
use serde::{Deserialize, Serialize};
use trigwarn_core::corpus::Corpus;
use trigwarn_core::predictions::Prediction;
use trigwarn_core::segmenter::{clean_text, CleaningConfig};
use trigwarn_core::{LabelVector, TriggerClass};

use crate::checkpoint::{load_model, save_model};
use crate::config::TruncationBaselineConfig;
use crate::model::{Dropout, SequenceClassifier};
use crate::tokenize::{SegmentTokenizer, TOKENIZER_FILE};
use crate::train::{train_classifier, Example, TrainSettings, TrainingLog, TRAINING_LOG_FILE};
use crate::{Error, Result};

pub const BASELINE_META_FILE: &str = "baseline.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BaselineMeta {
    config: TruncationBaselineConfig,
    cleaning: CleaningConfig,
}

pub struct TruncationBaseline {
    model: SequenceClassifier,
    tokenizer: SegmentTokenizer,
    config: TruncationBaselineConfig,
    cleaning: CleaningConfig,
    dir: PathBuf,
}

fn check_positions(model: &SequenceClassifier, max_tokens: usize) -> Result<()> {
    if model.config.max_input_tokens() < max_tokens {
        return Err(Error::InvalidConfig(format!(
            "max_tokens {max_tokens} exceeds the model's {} positions",
            model.config.max_input_tokens()
        )));
    }
    Ok(())
}

impl TruncationBaseline {
    pub fn train(
        corpus: &Corpus,
        cfg: &TruncationBaselineConfig,
        cleaning: &CleaningConfig,
        pretrained: &Path,
        out_dir: &Path,
    ) -> Result<(Self, TrainingLog)> {
        cfg.validate()?;
        let loaded = load_model(pretrained, cfg.seed)?;
        check_positions(&loaded.model, cfg.max_tokens)?;
        let tokenizer = SegmentTokenizer::load(&pretrained.join(TOKENIZER_FILE), cfg.max_tokens)?;
        let examples = corpus
            .iter()
            .map(|d| {
                let labels = d.labels.ok_or_else(|| Error::Unlabeled(d.id.clone()))?;
                Ok(Example {
                    ids: tokenizer.encode(&clean_text(&d.text, cleaning))?,
                    labels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let settings = TrainSettings {
            learning_rate: cfg.learning_rate,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
        };
        let log = train_classifier(&loaded, &examples, &settings)?;
        save_model(out_dir, &loaded.model.config, &loaded.varmap, &pretrained.join(TOKENIZER_FILE))?;
        log.write(&out_dir.join(TRAINING_LOG_FILE))?;
        let meta = BaselineMeta {
            config: cfg.clone(),
            cleaning: cleaning.clone(),
        };
        let meta_path = out_dir.join(BASELINE_META_FILE);
        std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta).expect("meta serializes"))
            .map_err(|e| Error::checkpoint(&meta_path, e))?;
        let baseline = TruncationBaseline {
            model: loaded.model,
            tokenizer,
            config: cfg.clone(),
            cleaning: cleaning.clone(),
            dir: out_dir.to_path_buf(),
        };
        Ok((baseline, log))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(BASELINE_META_FILE);
        let meta: BaselineMeta = std::fs::read(&meta_path)
            .map_err(|e| Error::checkpoint(&meta_path, e))
            .and_then(|b| serde_json::from_slice(&b).map_err(|e| Error::checkpoint(&meta_path, e)))?;
        let loaded = load_model(dir, meta.config.seed)?;
        check_positions(&loaded.model, meta.config.max_tokens)?;
        let tokenizer = SegmentTokenizer::load(&dir.join(TOKENIZER_FILE), meta.config.max_tokens)?;
        Ok(TruncationBaseline {
            model: loaded.model,
            tokenizer,
            config: meta.config,
            cleaning: meta.cleaning,
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Raw logits for an already-cleaned word list (after truncation).
    pub fn logits_for_words(&self, words: &[String]) -> Result<Vec<f32>> {
        let ids = self.tokenizer.encode(words)?;
        let logits = self.model.logits(&[ids], &mut Dropout::eval())?;
        Ok(logits.squeeze(0)?.to_vec1::<f32>()?)
    }

    pub fn probabilities(&self, text: &str) -> Result<Vec<f32>> {
        let ids = self.tokenizer.encode(&clean_text(text, &self.cleaning))?;
        let logits = self.model.logits(&[ids], &mut Dropout::eval())?;
        Ok(sigmoid(&logits)?.squeeze(0)?.to_vec1::<f32>()?)
    }

    pub fn predict(&self, text: &str) -> Result<LabelVector> {
        let probs = self.probabilities(text)?;
        let t = self.config.threshold as f32;
        Ok(LabelVector::from_classes(
            TriggerClass::all().filter(|c| probs[c.index()] >= t),
        ))
    }

    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Prediction>> {
        corpus
            .iter()
            .map(|d| {
                Ok(Prediction {
                    work_id: d.id.clone(),
                    labels: self.predict(&d.text)?,
                })
            })
            .collect()
    }
}
