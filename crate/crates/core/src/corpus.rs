//! Document collections: line-delimited ingestion, distribution statistics and holdout splits.
//!
//! On disk a corpus is UTF-8 JSON lines, one work per line:
//!
//! ```text
//! {"work_id": "123", "text": "...", "labels": ["violence", "death"]}
//! ```
//!
//! `labels` is optional for unlabeled (test-style) corpora. Layouts that keep texts and
//! labels in separate files can be joined with [`load_split_corpus`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::labels::{LabelVector, TriggerClass, NUM_CLASSES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub labels: Option<LabelVector>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    work_id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct LabelRecord {
    work_id: String,
    labels: Vec<String>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn is_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.labels.is_some())
    }

    /// Labels keyed by document id; documents without labels are omitted.
    pub fn label_map(&self) -> HashMap<String, LabelVector> {
        self.documents
            .iter()
            .filter_map(|d| d.labels.map(|l| (d.id.clone(), l)))
            .collect()
    }
}

fn check_labels(id: &str, labels: Option<LabelVector>, expect_labels: bool) -> Result<()> {
    if expect_labels && labels.map_or(true, LabelVector::is_empty) {
        return Err(Error::MissingLabels(id.to_string()));
    }
    Ok(())
}

/// Load a JSON-lines corpus, preserving file order.
///
/// With `expect_labels`, every record must carry at least one known label.
pub fn load_corpus(path: &Path, expect_labels: bool) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut documents = Vec::new();
    let mut seen = HashSet::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if record.text.is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("document `{}` has empty text", record.work_id),
            });
        }
        let labels = record
            .labels
            .as_ref()
            .map(LabelVector::from_names)
            .transpose()?;
        check_labels(&record.work_id, labels, expect_labels)?;
        if !seen.insert(record.work_id.clone()) {
            return Err(Error::DuplicateId(record.work_id));
        }
        documents.push(Document {
            id: record.work_id,
            text: record.text,
            labels,
        });
    }
    Ok(Corpus { documents })
}

/// Join a texts file (`work_id`, `text`) with a separate labels file (`work_id`, `labels`).
pub fn load_split_corpus(works: &Path, labels: &Path) -> Result<Corpus> {
    let mut corpus = load_corpus(works, false)?;
    let file = File::open(labels).map_err(|e| Error::io(labels, e))?;
    let mut by_id = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(labels, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LabelRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: labels.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        by_id.insert(record.work_id, LabelVector::from_names(&record.labels)?);
    }
    for doc in &mut corpus.documents {
        let labels = by_id.get(&doc.id).copied();
        check_labels(&doc.id, labels, true)?;
        doc.labels = labels;
    }
    Ok(corpus)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in &corpus.documents {
        let record = Record {
            work_id: doc.id.clone(),
            text: doc.text.clone(),
            labels: doc
                .labels
                .map(|l| l.names().into_iter().map(String::from).collect()),
        };
        serde_json::to_writer(&mut out, &record).expect("record serializes");
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_documents: usize,
    pub avg_words: f64,
    pub pos_ratio_per_class: Vec<f64>,
}

/// Document count, mean raw whitespace word count and per-class positive ratio.
pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut positives = [0usize; NUM_CLASSES];
    let mut words = 0usize;
    for doc in corpus.iter() {
        let labels = doc
            .labels
            .ok_or_else(|| Error::MissingLabels(doc.id.clone()))?;
        for class in labels.classes() {
            positives[class.index()] += 1;
        }
        words += doc.text.split_whitespace().count();
    }
    let n = corpus.len() as f64;
    Ok(CorpusStats {
        n_documents: corpus.len(),
        avg_words: words as f64 / n,
        pos_ratio_per_class: positives.iter().map(|&p| p as f64 / n).collect(),
    })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "documents: {}", self.n_documents)?;
        writeln!(f, "avg. words: {:.0}", self.avg_words)?;
        writeln!(f)?;
        writeln!(f, "{:>3}  {:<16} {:>8}", "#", "class", "ratio")?;
        for (class, ratio) in TriggerClass::all().zip(&self.pos_ratio_per_class) {
            writeln!(
                f,
                "{:>3}  {:<16} {:>7.2}%",
                class.number(),
                class.name(),
                ratio * 100.0
            )?;
        }
        Ok(())
    }
}

/// Seeded random partition into `(rest, holdout)` with `round(fraction * n)` holdout documents.
///
/// Both parts keep the input's relative order.
pub fn split_holdout(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "holdout fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = corpus.len();
    let n_holdout = (fraction * n as f64).round() as usize;
    if n_holdout == 0 || n_holdout >= n {
        return Err(Error::InvalidConfig(format!(
            "holdout fraction {fraction} leaves an empty side for {n} documents"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_holdout = vec![false; n];
    for &i in &order[..n_holdout] {
        in_holdout[i] = true;
    }
    let (holdout, rest): (Vec<_>, Vec<_>) = corpus
        .documents
        .iter()
        .cloned()
        .zip(in_holdout)
        .partition(|(_, h)| *h);
    Ok((
        Corpus {
            documents: rest.into_iter().map(|(d, _)| d).collect(),
        },
        Corpus {
            documents: holdout.into_iter().map(|(d, _)| d).collect(),
        },
    ))
}
