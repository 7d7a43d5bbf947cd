//! Segment-level fine-tuning and the resulting CLS-vector encoder.

use std::path::{Path, PathBuf};

use candle_nn::ops::sigmoid;
use serde::{Deserialize, Serialize};
use trigwarn_core::baselines::SegmentScorer;
use trigwarn_core::digest::{digest_file, digest_parts};
use trigwarn_core::encoder::SegmentEncoder;
use trigwarn_core::segmenter::SegmentedCorpus;
use trigwarn_core::NUM_CLASSES;

use crate::checkpoint::{load_model, save_model, WEIGHTS_FILE};
use crate::config::EncoderConfig;
use crate::model::{Dropout, SequenceClassifier};
use crate::tokenize::{SegmentTokenizer, TOKENIZER_FILE};
use crate::train::{train_classifier, Example, TrainSettings, TrainingLog, TRAINING_LOG_FILE};
use crate::{Error, Result};

pub const ENCODER_META_FILE: &str = "encoder.json";
const INFERENCE_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EncoderMeta {
    max_tokens: usize,
    config: EncoderConfig,
}

/// Builds one training example per segment, labeled with its document's labels.
pub fn segment_examples(segments: &SegmentedCorpus, tokenizer: &SegmentTokenizer) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for seg in segments.segments() {
        let labels = seg.labels.ok_or_else(|| Error::Unlabeled(seg.doc_id.clone()))?;
        out.push(Example {
            ids: tokenizer.encode(&seg.words)?,
            labels,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(out)
}

/// Fine-tunes the checkpoint at `pretrained` on label-inherited segments and writes the
/// result (with its classification head) to `out_dir`.
pub fn fine_tune(
    segments: &SegmentedCorpus,
    cfg: &EncoderConfig,
    pretrained: &Path,
    out_dir: &Path,
) -> Result<TrainingLog> {
    cfg.validate()?;
    let loaded = load_model(pretrained, cfg.seed)?;
    if loaded.model.config.max_input_tokens() < cfg.max_tokens {
        return Err(Error::InvalidConfig(format!(
            "max_tokens {} exceeds the model's {} positions",
            cfg.max_tokens,
            loaded.model.config.max_input_tokens()
        )));
    }
    let tokenizer = SegmentTokenizer::load(&pretrained.join(TOKENIZER_FILE), cfg.max_tokens)?;
    let examples = segment_examples(segments, &tokenizer)?;
    let settings = TrainSettings {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let log = train_classifier(&loaded, &examples, &settings)?;
    save_model(out_dir, &loaded.model.config, &loaded.varmap, &pretrained.join(TOKENIZER_FILE))?;
    log.write(&out_dir.join(TRAINING_LOG_FILE))?;
    let meta = EncoderMeta {
        max_tokens: cfg.max_tokens,
        config: cfg.clone(),
    };
    let meta_path = out_dir.join(ENCODER_META_FILE);
    std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta).expect("meta serializes"))
        .map_err(|e| Error::checkpoint(&meta_path, e))?;
    Ok(log)
}

/// A fine-tuned checkpoint used in inference mode: CLS vectors for embedding, the
/// retained head for segment-level scoring.
pub struct FineTunedEncoder {
    model: SequenceClassifier,
    tokenizer: SegmentTokenizer,
    fingerprint: String,
    dir: PathBuf,
}

impl FineTunedEncoder {
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(ENCODER_META_FILE);
        let meta: EncoderMeta = std::fs::read(&meta_path)
            .map_err(|e| Error::checkpoint(&meta_path, e))
            .and_then(|b| serde_json::from_slice(&b).map_err(|e| Error::checkpoint(&meta_path, e)))?;
        let loaded = load_model(dir, meta.config.seed)?;
        let tokenizer = SegmentTokenizer::load(&dir.join(TOKENIZER_FILE), meta.max_tokens)?;
        let fingerprint = digest_parts([
            "fine-tuned-cls:v1".to_string(),
            digest_file(&dir.join(WEIGHTS_FILE))?,
            digest_file(&dir.join(TOKENIZER_FILE))?,
            format!("max_tokens={}", meta.max_tokens),
        ]);
        Ok(FineTunedEncoder {
            model: loaded.model,
            tokenizer,
            fingerprint,
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn training_log(&self) -> Result<TrainingLog> {
        TrainingLog::read(&self.dir.join(TRAINING_LOG_FILE))
    }

    fn tokenize(&self, segments: &[&[String]]) -> Result<Vec<Vec<u32>>> {
        segments.iter().map(|w| self.tokenizer.encode(w)).collect()
    }
}

impl SegmentEncoder for FineTunedEncoder {
    fn dim(&self) -> usize {
        self.model.config.hidden_size
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn embed_batch(&self, segments: &[&[String]]) -> trigwarn_core::Result<Vec<Vec<f32>>> {
        if segments.iter().any(|s| s.is_empty()) {
            return Err(trigwarn_core::Error::Encoder("cannot embed an empty segment".into()));
        }
        let ids = self.tokenize(segments)?;
        let mut out = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(INFERENCE_BATCH) {
            let cls = self
                .model
                .cls(chunk, &mut Dropout::eval())
                .and_then(|t| Ok(t.to_vec2::<f32>()?))?;
            out.extend(cls);
        }
        Ok(out)
    }
}

impl SegmentScorer for FineTunedEncoder {
    fn score_segments(&self, segments: &[&[String]]) -> trigwarn_core::Result<Vec<[f32; NUM_CLASSES]>> {
        let ids = self.tokenize(segments)?;
        let mut out = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(INFERENCE_BATCH) {
            let probs = self
                .model
                .logits(chunk, &mut Dropout::eval())
                .and_then(|t| Ok(sigmoid(&t)?.to_vec2::<f32>()?))?;
            for row in probs {
                let mut p = [0.0f32; NUM_CLASSES];
                p.copy_from_slice(&row[..NUM_CLASSES]);
                out.push(p);
            }
        }
        Ok(out)
    }
}
