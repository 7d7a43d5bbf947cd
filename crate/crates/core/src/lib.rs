//! Core building blocks for hierarchical multi-label trigger-warning classification.
//!
//! The pipeline is: [`corpus`] ingestion, [`segmenter`] cleaning and overlapping word
//! windows, per-segment embeddings ([`encoder`], persisted in a [`store`]), one recurrent
//! binary head per label ([`heads`]), and evaluation ([`metrics`]). [`baselines`] holds the
//! comparison systems that do not need a transformer runtime.

pub mod baselines;
pub mod corpus;
pub mod digest;
pub mod encoder;
mod error;
pub mod heads;
pub mod labels;
pub mod metrics;
pub mod predictions;
pub mod segmenter;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
pub use labels::{LabelVector, TriggerClass, NUM_CLASSES};
