//! Comparison systems: TF-IDF features with boosted trees, and a per-segment scorer whose
//! probabilities are max-pooled into a document decision.

pub mod gbt;
pub mod tfidf;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::labels::{LabelVector, TriggerClass, NUM_CLASSES};
use crate::predictions::Prediction;
use crate::segmenter::{clean_text, CleaningConfig, SegmentedCorpus};
use crate::{Error, Result};

pub use gbt::{Booster, BoosterParams, Columns};
pub use tfidf::{SparseVector, TfidfVectorizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfidfGbtConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub max_features: usize,
    pub booster: BoosterParams,
    pub threshold: f64,
}

impl Default for TfidfGbtConfig {
    fn default() -> Self {
        TfidfGbtConfig {
            ngram_min: 1,
            ngram_max: 2,
            max_features: 20_000,
            booster: BoosterParams::default(),
            threshold: 0.5,
        }
    }
}

/// One booster per class over a shared vocabulary. Classes without training positives
/// have no booster and always predict negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfGbtClassifier {
    pub config: TfidfGbtConfig,
    pub cleaning: CleaningConfig,
    pub vectorizer: TfidfVectorizer,
    pub boosters: Vec<Option<Booster>>,
}

impl TfidfGbtClassifier {
    pub fn train(corpus: &Corpus, cleaning: &CleaningConfig, config: &TfidfGbtConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let words: Vec<Vec<String>> = corpus
            .documents
            .par_iter()
            .map(|d| clean_text(&d.text, cleaning))
            .collect();
        let labels: Vec<LabelVector> = corpus
            .iter()
            .map(|d| d.labels.ok_or_else(|| Error::MissingLabels(d.id.clone())))
            .collect::<Result<_>>()?;
        let vectorizer =
            TfidfVectorizer::fit(&words, config.ngram_min, config.ngram_max, config.max_features)?;
        let rows: Vec<SparseVector> = words.par_iter().map(|w| vectorizer.transform(w)).collect();
        let columns = Columns::new(&rows, vectorizer.n_features());
        let boosters = TriggerClass::all()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|class| {
                let y: Vec<bool> = labels.iter().map(|l| l.contains(class)).collect();
                if !y.iter().any(|&b| b) {
                    log::info!("tfidf-gbt: no positives for {class}; predicting negative");
                    return None;
                }
                Some(Booster::fit(&columns, &y, &config.booster))
            })
            .collect();
        Ok(TfidfGbtClassifier {
            config: config.clone(),
            cleaning: cleaning.clone(),
            vectorizer,
            boosters,
        })
    }

    pub fn probabilities(&self, text: &str) -> Vec<f64> {
        let x = self.vectorizer.transform(&clean_text(text, &self.cleaning));
        self.boosters
            .iter()
            .map(|b| b.as_ref().map_or(0.0, |b| b.probability(&x)))
            .collect()
    }

    pub fn predict(&self, text: &str) -> LabelVector {
        let probs = self.probabilities(text);
        LabelVector::from_classes(
            TriggerClass::all().filter(|c| probs[c.index()] >= self.config.threshold),
        )
    }

    pub fn predict_corpus(&self, corpus: &Corpus) -> Vec<Prediction> {
        corpus
            .documents
            .par_iter()
            .map(|d| Prediction {
                work_id: d.id.clone(),
                labels: self.predict(&d.text),
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).expect("classifier serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut model: Self = serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        model.vectorizer.rebuild_index();
        Ok(model)
    }
}

/// Anything that assigns 32 class probabilities to each segment of a document.
pub trait SegmentScorer: Send + Sync {
    fn score_segments(&self, segments: &[&[String]]) -> Result<Vec<[f32; NUM_CLASSES]>>;
}

/// Per-class maximum over segment probabilities; all zeros when there are no segments.
pub fn aggregate_max(scores: &[[f32; NUM_CLASSES]]) -> [f32; NUM_CLASSES] {
    let mut out = [0.0f32; NUM_CLASSES];
    for s in scores {
        for (o, &p) in out.iter_mut().zip(s) {
            *o = o.max(p);
        }
    }
    out
}

/// Documents predict a label when any of their segments crosses `threshold`. Documents
/// skipped at segmentation (nothing left after cleaning) are reported as all-negative.
pub fn predict_segment_baseline(
    scorer: &dyn SegmentScorer,
    corpus: &SegmentedCorpus,
    threshold: f32,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(corpus.documents.len() + corpus.skipped.len());
    for doc in &corpus.documents {
        let segments: Vec<&[String]> = doc.segments.iter().map(|s| s.words.as_slice()).collect();
        let pooled = aggregate_max(&scorer.score_segments(&segments)?);
        out.push(Prediction {
            work_id: doc.doc_id.clone(),
            labels: LabelVector::from_classes(
                TriggerClass::all().filter(|c| pooled[c.index()] >= threshold),
            ),
        });
    }
    for id in &corpus.skipped {
        log::warn!("{id}: no segments; predicting no warnings");
        out.push(Prediction {
            work_id: id.clone(),
            labels: LabelVector::EMPTY,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    #[test]
    fn max_pooling_takes_the_strongest_segment() {
        let mut a = [0.1f32; NUM_CLASSES];
        let mut b = [0.2f32; NUM_CLASSES];
        a[3] = 0.9;
        b[5] = 0.7;
        let m = aggregate_max(&[a, b]);
        assert_eq!(m[3], 0.9);
        assert_eq!(m[5], 0.7);
        assert_eq!(m[0], 0.2);
        assert_eq!(aggregate_max(&[]), [0.0; NUM_CLASSES]);
    }

    #[test]
    fn tfidf_gbt_separates_marker_documents() {
        let abuse = TriggerClass::from_number(1).unwrap();
        let docs: Vec<Document> = (0..40)
            .map(|i| {
                let positive = i % 4 == 0;
                let text = if positive {
                    format!("dragon castle knight battle doc{i} ominous shadow")
                } else {
                    format!("garden flower sunny meadow doc{i} picnic basket")
                };
                Document {
                    id: format!("w{i}"),
                    text,
                    labels: Some(if positive {
                        LabelVector::from_classes([abuse])
                    } else {
                        LabelVector::from_classes([TriggerClass::from_number(2).unwrap()])
                    }),
                }
            })
            .collect();
        let corpus = Corpus::new(docs).unwrap();
        let cfg = TfidfGbtConfig {
            booster: BoosterParams { n_trees: 10, ..Default::default() },
            ..Default::default()
        };
        let model = TfidfGbtClassifier::train(&corpus, &CleaningConfig::default(), &cfg).unwrap();
        assert!(model.boosters[abuse.index()].is_some());
        assert!(model.boosters[10].is_none());
        assert!(model.predict("the dragon castle knight battle ominous shadow").contains(abuse));
        assert!(!model.predict("the garden flower sunny meadow picnic basket").contains(abuse));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = TfidfGbtClassifier::load(&path).unwrap();
        assert_eq!(back.predict("ominous shadow"), model.predict("ominous shadow"));
    }
}
