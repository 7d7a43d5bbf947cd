//! Subword tokenization of word lists, truncated to a token budget.

use std::path::Path;

use serde_json::json;
use tokenizers::{Tokenizer, TruncationParams};

use crate::{Error, Result};

pub const TOKENIZER_FILE: &str = "tokenizer.json";

/// A tokenizer with truncation fixed at `max_tokens`, special tokens included.
pub struct SegmentTokenizer {
    inner: Tokenizer,
    max_tokens: usize,
}

impl SegmentTokenizer {
    pub fn load(path: &Path, max_tokens: usize) -> Result<Self> {
        let mut inner = Tokenizer::from_file(path).map_err(|e| Error::checkpoint(path, e))?;
        inner
            .with_truncation(Some(TruncationParams {
                max_length: max_tokens,
                ..Default::default()
            }))
            .map_err(|e| Error::Tokenizer(e.to_string()))?;
        inner.with_padding(None);
        Ok(SegmentTokenizer { inner, max_tokens })
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    /// Words are re-joined with single spaces before subword tokenization.
    pub fn encode(&self, words: &[String]) -> Result<Vec<u32>> {
        let text = words.join(" ");
        let enc = self
            .inner
            .encode(text, true)
            .map_err(|e| Error::Tokenizer(e.to_string()))?;
        Ok(enc.get_ids().to_vec())
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.inner.token_to_id(token)
    }
}

/// Ids of the special tokens written by [`write_word_level_tokenizer`].
pub const BOS: u32 = 0;
pub const PAD: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

/// Writes a whitespace word-level tokenizer in the RoBERTa special-token layout
/// (`<s>`=0, `<pad>`=1, `</s>`=2, `<unk>`=3, then `words` in order). Returns the vocabulary size.
pub fn write_word_level_tokenizer(path: &Path, words: &[String]) -> Result<usize> {
    let specials = ["<s>", "<pad>", "</s>", "<unk>"];
    let mut vocab = serde_json::Map::new();
    for (i, s) in specials.iter().enumerate() {
        vocab.insert(s.to_string(), json!(i));
    }
    for w in words {
        if !vocab.contains_key(w) {
            let id = vocab.len();
            vocab.insert(w.clone(), json!(id));
        }
    }
    let size = vocab.len();
    let added: Vec<_> = specials
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({"id": i, "content": s, "single_word": false, "lstrip": false,
                   "rstrip": false, "normalized": false, "special": true})
        })
        .collect();
    let special = |t: &str| json!({"SpecialToken": {"id": t, "type_id": 0}});
    let seq = |s: &str| json!({"Sequence": {"id": s, "type_id": 0}});
    let doc = json!({
        "version": "1.0",
        "truncation": null,
        "padding": null,
        "added_tokens": added,
        "normalizer": null,
        "pre_tokenizer": {"type": "WhitespaceSplit"},
        "post_processor": {
            "type": "TemplateProcessing",
            "single": [special("<s>"), seq("A"), special("</s>")],
            "pair": [special("<s>"), seq("A"), special("</s>"), special("</s>"), seq("B"), special("</s>")],
            "special_tokens": {
                "<s>": {"id": "<s>", "ids": [BOS], "tokens": ["<s>"]},
                "</s>": {"id": "</s>", "ids": [EOS], "tokens": ["</s>"]}
            }
        },
        "decoder": null,
        "model": {"type": "WordLevel", "vocab": vocab, "unk_token": "<unk>"}
    });
    let bytes = serde_json::to_vec(&doc).expect("tokenizer json serializes");
    std::fs::write(path, bytes).map_err(|e| Error::checkpoint(path, e))?;
    Ok(size)
}
