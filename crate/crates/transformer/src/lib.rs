//! Transformer side of the pipeline: fine-tuning a BERT/RoBERTa-family encoder on
//! label-inherited segments, extracting last-layer CLS vectors as segment embeddings, and
//! the two transformer baselines (segment head with max pooling, and whole-document
//! truncation).
//!
//! Checkpoints are read from local directories in the Hugging Face layout; nothing is
//! downloaded. [`checkpoint::init_checkpoint`] writes a small seeded model with a
//! word-level tokenizer for runs without a downloaded encoder.

pub mod checkpoint;
pub mod config;
pub mod encoder;
mod error;
pub mod model;
pub mod tokenize;
pub mod train;
pub mod truncation;

pub use config::{EncoderConfig, ModelConfig, TruncationBaselineConfig};
pub use encoder::{fine_tune, FineTunedEncoder};
pub use error::{Error, Result};
pub use truncation::TruncationBaseline;
