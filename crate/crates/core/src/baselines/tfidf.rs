//! TF-IDF document vectors.
//!
//! `tf` is the raw count, `idf = ln((1 + N) / (1 + df)) + 1`, and each vector is
//! L2-normalized. The vocabulary keeps the `max_features` most frequent n-grams
//! (ties broken lexicographically).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sorted feature indices with their values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseVector {
    pub fn get(&self, feature: u32) -> f32 {
        match self.indices.binary_search(&feature) {
            Ok(i) => self.values[i],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub terms: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

fn ngrams(words: &[String], lo: usize, hi: usize) -> impl Iterator<Item = String> + '_ {
    (lo..=hi).flat_map(move |n| words.windows(n).map(|w| w.join(" ")))
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl TfidfVectorizer {
    pub fn fit(docs: &[Vec<String>], ngram_min: usize, ngram_max: usize, max_features: usize) -> Result<Self> {
        if ngram_min == 0 || ngram_min > ngram_max {
            return Err(Error::InvalidConfig(format!(
                "bad n-gram range ({ngram_min}, {ngram_max})"
            )));
        }
        let mut freq: HashMap<String, (usize, usize)> = HashMap::new();
        for doc in docs {
            let mut local: HashMap<String, usize> = HashMap::new();
            for g in ngrams(doc, ngram_min, ngram_max) {
                *local.entry(g).or_default() += 1;
            }
            for (g, c) in local {
                let e = freq.entry(g).or_default();
                e.0 += c;
                e.1 += 1;
            }
        }
        if freq.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut ranked: Vec<(String, usize, usize)> =
            freq.into_iter().map(|(g, (tf, df))| (g, tf, df)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_features.max(1));
        ranked.sort_by(|a, b| a.0.cmp(&b.0));
        let n = docs.len();
        let mut v = TfidfVectorizer {
            ngram_min,
            ngram_max,
            idf: ranked.iter().map(|(_, _, df)| idf(n, *df)).collect(),
            terms: ranked.into_iter().map(|(g, _, _)| g).collect(),
            index: HashMap::new(),
        };
        v.rebuild_index();
        Ok(v)
    }

    /// Restore the term lookup after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn n_features(&self) -> usize {
        self.terms.len()
    }

    pub fn transform(&self, words: &[String]) -> SparseVector {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for g in ngrams(words, self.ngram_min, self.ngram_max) {
            if let Some(&i) = self.index.get(&g) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i as usize]))
            .collect();
        entries.sort_by_key(|e| e.0);
        let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        SparseVector {
            indices: entries.iter().map(|e| e.0).collect(),
            values: entries
                .iter()
                .map(|e| if norm > 0.0 { (e.1 / norm) as f32 } else { 0.0 })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn term_in_every_document_has_minimum_idf() {
        let docs = vec![doc("a b"), doc("a c"), doc("a")];
        let v = TfidfVectorizer::fit(&docs, 1, 1, 100).unwrap();
        let a = v.terms.iter().position(|t| t == "a").unwrap();
        assert_eq!(v.idf[a], 1.0);
        let b = v.terms.iter().position(|t| t == "b").unwrap();
        assert!((v.idf[b] - ((4.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn vectors_are_unit_norm_and_deterministic() {
        let docs = vec![doc("x y y z"), doc("x y y z"), doc("q")];
        let v = TfidfVectorizer::fit(&docs, 1, 2, 100).unwrap();
        let a = v.transform(&docs[0]);
        assert_eq!(a, v.transform(&docs[1]));
        let norm: f32 = a.values.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-5);
        assert!(v.terms.contains(&"y z".to_string()));
    }

    #[test]
    fn cap_keeps_most_frequent() {
        let docs = vec![doc("a a a b b c")];
        let v = TfidfVectorizer::fit(&docs, 1, 1, 2).unwrap();
        assert_eq!(v.terms, vec!["a", "b"]);
        assert!(matches!(TfidfVectorizer::fit(&[vec![]], 1, 1, 2), Err(Error::EmptyVocabulary)));
    }
}
