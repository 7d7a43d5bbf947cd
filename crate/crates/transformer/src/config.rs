//! Model architecture (read from a checkpoint's `config.json`) and training settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The subset of a BERT/RoBERTa `config.json` this crate understands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_model_type")]
    pub model_type: String,
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_dropout")]
    pub hidden_dropout_prob: f64,
    #[serde(default = "default_dropout")]
    pub attention_probs_dropout_prob: f64,
    #[serde(default = "default_pad")]
    pub pad_token_id: u32,
    #[serde(default = "default_act")]
    pub hidden_act: String,
    /// Width of the multi-label classification head.
    #[serde(default = "default_labels")]
    pub num_labels: usize,
}

fn default_model_type() -> String {
    "roberta".into()
}
fn default_type_vocab() -> usize {
    1
}
fn default_eps() -> f64 {
    1e-5
}
fn default_dropout() -> f64 {
    0.1
}
fn default_pad() -> u32 {
    1
}
fn default_act() -> String {
    "gelu".into()
}
fn default_labels() -> usize {
    trigwarn_core::NUM_CLASSES
}

impl ModelConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::checkpoint(path, e))?;
        let cfg: ModelConfig = serde_json::from_slice(&bytes).map_err(|e| Error::checkpoint(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("config serializes");
        std::fs::write(path, json).map_err(|e| Error::checkpoint(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_attention_heads == 0 {
            return Err(Error::InvalidConfig("hidden size and head count must be positive".into()));
        }
        if self.hidden_size % self.num_attention_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden_size, self.num_attention_heads
            )));
        }
        if self.num_labels != trigwarn_core::NUM_CLASSES {
            return Err(Error::InvalidConfig(format!(
                "classification head has {} outputs, expected {}",
                self.num_labels,
                trigwarn_core::NUM_CLASSES
            )));
        }
        if !matches!(self.hidden_act.as_str(), "gelu" | "gelu_new" | "relu") {
            return Err(Error::InvalidConfig(format!("unsupported activation `{}`", self.hidden_act)));
        }
        Ok(())
    }

    pub fn is_roberta(&self) -> bool {
        self.model_type == "roberta" || self.model_type == "xlm-roberta"
    }

    /// Longest input the position table can hold, counting special tokens.
    pub fn max_input_tokens(&self) -> usize {
        if self.is_roberta() {
            self.max_position_embeddings
                .saturating_sub(self.pad_token_id as usize + 1)
        } else {
            self.max_position_embeddings
        }
    }

    /// A small architecture for tests and desk-scale runs.
    pub fn tiny(vocab_size: usize) -> Self {
        ModelConfig {
            model_type: "roberta".into(),
            vocab_size,
            hidden_size: 32,
            num_hidden_layers: 1,
            num_attention_heads: 2,
            intermediate_size: 64,
            max_position_embeddings: 520,
            type_vocab_size: 1,
            layer_norm_eps: 1e-5,
            hidden_dropout_prob: 0.1,
            attention_probs_dropout_prob: 0.1,
            pad_token_id: 1,
            hidden_act: "gelu".into(),
            num_labels: trigwarn_core::NUM_CLASSES,
        }
    }
}

/// Segment-level fine-tuning settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Directory with `config.json`, `model.safetensors` and `tokenizer.json`.
    pub model_name: String,
    pub max_tokens: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            model_name: "roberta-base".into(),
            max_tokens: 256,
            learning_rate: 1e-5,
            epochs: 3,
            batch_size: 8,
            seed: 42,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        validate_training(self.max_tokens, self.epochs, self.batch_size, self.learning_rate)
    }
}

/// Whole-document fine-tuning with everything past `max_tokens` dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationBaselineConfig {
    pub model_name: String,
    pub max_tokens: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TruncationBaselineConfig {
    fn default() -> Self {
        TruncationBaselineConfig {
            model_name: "bert-base-uncased".into(),
            max_tokens: 512,
            learning_rate: 1e-5,
            epochs: 5,
            batch_size: 8,
            threshold: 0.5,
            seed: 42,
        }
    }
}

impl TruncationBaselineConfig {
    pub fn validate(&self) -> Result<()> {
        validate_training(self.max_tokens, self.epochs, self.batch_size, self.learning_rate)?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

fn validate_training(max_tokens: usize, epochs: usize, batch_size: usize, lr: f64) -> Result<()> {
    if max_tokens < 2 {
        return Err(Error::InvalidConfig("max_tokens must leave room for special tokens".into()));
    }
    if epochs == 0 || batch_size == 0 {
        return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
    }
    if !(lr > 0.0) {
        return Err(Error::InvalidConfig(format!("learning rate {lr} must be positive")));
    }
    Ok(())
}
