//! Seeded synthetic corpora with known signal.
//!
//! Each active class owns a few marker tokens (`trg07x2` …). A document labeled with a
//! class carries that class's markers at a configurable rate, either anywhere in the text
//! or only past a given content-word position. Everything else is pronounceable filler,
//! with stopwords and HTML tags sprinkled in so that cleaning has something to do.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::labels::{LabelVector, TriggerClass};
use crate::segmenter::is_stopword;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "position")]
pub enum MarkerPlacement {
    /// Markers may appear at any content position.
    Uniform,
    /// Markers only appear at content positions `>= n`.
    After(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class: TriggerClass,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_documents: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub classes: Vec<ClassSpec>,
    /// Probability that a content position of a positive document holds a marker.
    pub marker_rate: f64,
    pub markers_per_class: usize,
    pub placement: MarkerPlacement,
    /// Probability of inserting a stopword before each content word.
    pub stopword_rate: f64,
    /// Probability of wrapping a paragraph break (`<p>`) before each content word.
    pub html_rate: f64,
    /// Probability of flipping each active-class label after the text is written.
    pub label_noise: f64,
    pub vocabulary_size: usize,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_documents: 200,
            min_words: 300,
            max_words: 700,
            classes: vec![ClassSpec {
                class: TriggerClass::from_number(2).expect("valid class"),
                prevalence: 0.3,
            }],
            marker_rate: 0.05,
            markers_per_class: 3,
            placement: MarkerPlacement::Uniform,
            stopword_rate: 0.2,
            html_rate: 0.01,
            label_noise: 0.0,
            vocabulary_size: 2000,
            id_prefix: "syn".to_string(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_documents == 0 {
            return bad("n_documents must be positive".into());
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad(format!("bad length range {}..={}", self.min_words, self.max_words));
        }
        if let MarkerPlacement::After(p) = self.placement {
            if self.min_words <= p {
                return bad(format!("min_words {} leaves no room after position {p}", self.min_words));
            }
        }
        for rate in [self.marker_rate, self.stopword_rate, self.html_rate, self.label_noise] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("rate {rate} outside [0, 1]"));
            }
        }
        for spec in &self.classes {
            if !(0.0..=1.0).contains(&spec.prevalence) {
                return bad(format!("prevalence {} outside [0, 1]", spec.prevalence));
            }
        }
        if self.markers_per_class == 0 || self.vocabulary_size == 0 {
            return bad("markers_per_class and vocabulary_size must be positive".into());
        }
        Ok(())
    }
}

pub fn marker_token(class: TriggerClass, k: usize) -> String {
    format!("trg{:02}x{k}", class.number())
}

const ONSETS: &[&str] = &[
    "b", "br", "c", "ch", "d", "dr", "f", "g", "gl", "h", "j", "k", "l", "m", "n", "p", "pl",
    "qu", "r", "s", "sh", "st", "t", "th", "v", "w", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "m", "nd", "st", "k"];

fn filler_vocabulary(size: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut vocab = Vec::with_capacity(size);
    while vocab.len() < size {
        let syllables = rng.random_range(2..=3);
        let word: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}{}",
                    ONSETS.choose(rng).unwrap(),
                    VOWELS.choose(rng).unwrap(),
                    CODAS.choose(rng).unwrap()
                )
            })
            .collect();
        if !is_stopword(&word) && !word.starts_with("trg") && seen.insert(word.clone()) {
            vocab.push(word);
        }
    }
    vocab
}

const SPRINKLED_STOPWORDS: &[&str] = &["the", "and", "of", "to", "a", "in", "was", "she", "it", "The"];

/// Generates a labeled corpus. Every document has at least one label: documents that
/// draw none of the configured classes are labeled with class 1.
pub fn generate(cfg: &SyntheticConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = filler_vocabulary(cfg.vocabulary_size, &mut rng);
    let n = cfg.n_documents;

    let mut labels = vec![LabelVector::EMPTY; n];
    for spec in &cfg.classes {
        let count = (spec.prevalence * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in &order[..count.min(n)] {
            labels[i].set(spec.class, true);
        }
    }
    let fallback = TriggerClass::from_number(1).expect("valid class");
    for l in &mut labels {
        if l.is_empty() {
            l.set(fallback, true);
        }
    }

    let mut documents = Vec::with_capacity(n);
    for (i, truth) in labels.iter().enumerate() {
        let len = rng.random_range(cfg.min_words..=cfg.max_words);
        let first_marker = match cfg.placement {
            MarkerPlacement::Uniform => 0,
            MarkerPlacement::After(p) => p,
        };
        let own: Vec<TriggerClass> = cfg
            .classes
            .iter()
            .map(|s| s.class)
            .filter(|&c| truth.contains(c))
            .collect();
        let mut text = String::new();
        for pos in 0..len {
            if rng.random::<f64>() < cfg.html_rate {
                text.push_str("<p>");
            }
            if rng.random::<f64>() < cfg.stopword_rate {
                text.push_str(SPRINKLED_STOPWORDS.choose(&mut rng).unwrap());
                text.push(' ');
            }
            let word = if pos >= first_marker && !own.is_empty() && rng.random::<f64>() < cfg.marker_rate {
                let class = *own.choose(&mut rng).unwrap();
                marker_token(class, rng.random_range(0..cfg.markers_per_class))
            } else {
                vocab.choose(&mut rng).unwrap().clone()
            };
            text.push_str(&word);
            text.push(' ');
        }
        let mut observed = *truth;
        if cfg.label_noise > 0.0 {
            for spec in &cfg.classes {
                if rng.random::<f64>() < cfg.label_noise {
                    observed.set(spec.class, !observed.contains(spec.class));
                }
            }
            if observed.is_empty() {
                observed.set(fallback, true);
            }
        }
        documents.push(Document {
            id: format!("{}-{i:05}", cfg.id_prefix),
            text: text.trim_end().to_string(),
            labels: Some(observed),
        });
    }
    Corpus::new(documents)
}
