//! Segment encoders: anything that maps a segment's words to a fixed-size vector.
//!
//! The transformer encoder lives in its own crate; [`ReferenceEncoder`] is a seeded
//! feature-hashing encoder with no model weights, used to run and test everything
//! downstream without a GPU.

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::segmenter::Segment;
use crate::{Error, Result};

pub trait SegmentEncoder: Send + Sync {
    /// Embedding dimension.
    fn dim(&self) -> usize;

    /// Identifies the encoder's weights and configuration; part of every cache key.
    fn fingerprint(&self) -> String;

    /// Embed a batch of segments given as word lists. Inference must be deterministic.
    fn embed_batch(&self, segments: &[&[String]]) -> Result<Vec<Vec<f32>>>;

    fn embed(&self, segment: &Segment) -> Result<SegmentEmbedding> {
        if segment.words.is_empty() {
            return Err(Error::Encoder(format!(
                "segment {} of `{}` is empty",
                segment.index, segment.doc_id
            )));
        }
        let mut out = self.embed_batch(&[segment.words.as_slice()])?;
        Ok(SegmentEmbedding {
            doc_id: segment.doc_id.clone(),
            segment_index: segment.index,
            vector: out.pop().expect("one vector per segment"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEmbedding {
    pub doc_id: String,
    pub segment_index: usize,
    pub vector: Vec<f32>,
}

/// All segment embeddings of one document, in segment order, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub doc_id: String,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingSequence {
    pub fn new(doc_id: impl Into<String>, dim: usize, rows: Vec<Vec<f32>>) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(EmbeddingSequence {
            doc_id: doc_id.into(),
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn view(&self) -> ndarray::ArrayView2<'_, f32> {
        ndarray::ArrayView2::from_shape((self.len(), self.dim), &self.data)
            .expect("data length is a multiple of dim")
    }
}

/// Bag-of-words feature hashing into `dim` buckets, then L2 normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceEncoder {
    dim: usize,
    seed: u64,
}

impl ReferenceEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 8 {
            return Err(Error::InvalidConfig(format!(
                "reference encoder needs dim >= 8, got {dim}"
            )));
        }
        Ok(ReferenceEncoder { dim, seed })
    }

    pub fn bucket(&self, word: &str) -> usize {
        (xxh3_64_with_seed(word.as_bytes(), self.seed) % self.dim as u64) as usize
    }

    /// Raw bucket counts before normalization.
    pub fn counts(&self, words: &[String]) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for w in words {
            v[self.bucket(w)] += 1.0;
        }
        v
    }
}

impl SegmentEncoder for ReferenceEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("reference-xxh3:v1:dim={}:seed={}", self.dim, self.seed)
    }

    fn embed_batch(&self, segments: &[&[String]]) -> Result<Vec<Vec<f32>>> {
        segments
            .iter()
            .map(|words| {
                if words.is_empty() {
                    return Err(Error::Encoder("cannot embed an empty segment".into()));
                }
                let mut v = self.counts(words);
                let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                for x in &mut v {
                    *x = (*x as f64 / norm) as f32;
                }
                Ok(v)
            })
            .collect()
    }
}
