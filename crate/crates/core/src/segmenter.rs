//! Text cleaning and overlapping fixed-length word windows.
//!
//! Cleaning runs in a fixed order: strip HTML tags, strip URLs, lowercase, split on
//! whitespace, drop stopwords. A word is a maximal run of non-whitespace; punctuation is
//! left for the subword tokenizer.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::digest::digest_parts;
use crate::labels::LabelVector;
use crate::{Error, Result};

/// Bundled English stopword list (179 entries, lowercase, one per line).
pub const STOPWORDS_EN: &str = include_str!("../assets/stopwords_en.txt");

static STOPWORDS: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| STOPWORDS_EN.lines().filter(|l| !l.is_empty()).collect());

/// Any `<...>` tag.
pub const HTML_TAG_PATTERN: &str = r"<[^>]*>";
/// Tokens introduced by a URL scheme or `www.`; applied before lowercasing.
pub const URL_PATTERN: &str = r"(?i)(?:https?://|www\.)\S*";

static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(HTML_TAG_PATTERN).unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(URL_PATTERN).unwrap());

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(word)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub lowercase: bool,
    pub strip_html: bool,
    pub strip_urls: bool,
    pub remove_stopwords: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            lowercase: true,
            strip_html: true,
            strip_urls: true,
            remove_stopwords: true,
        }
    }
}

impl CleaningConfig {
    /// Digest over the flags and the exact stopword and pattern assets.
    pub fn digest(&self) -> String {
        let flags = format!(
            "lower={} html={} urls={} stop={}",
            self.lowercase, self.strip_html, self.strip_urls, self.remove_stopwords
        );
        digest_parts([
            flags.as_str(),
            HTML_TAG_PATTERN,
            URL_PATTERN,
            if self.remove_stopwords { STOPWORDS_EN } else { "" },
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub segment_length: usize,
    pub overlap: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            segment_length: 200,
            overlap: 50,
        }
    }
}

impl SegmentationConfig {
    pub fn new(segment_length: usize, overlap: usize) -> Result<Self> {
        let cfg = SegmentationConfig {
            segment_length,
            overlap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_length == 0 || self.overlap >= self.segment_length {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= overlap < segment_length, got overlap {} with segment_length {}",
                self.overlap, self.segment_length
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.segment_length - self.overlap
    }

    /// Closed-form number of windows for a non-empty word list.
    pub fn window_count(&self, n_words: usize) -> usize {
        match n_words {
            0 => 0,
            n if n <= self.segment_length => 1,
            n => (n - self.segment_length).div_ceil(self.stride()) + 1,
        }
    }

    pub fn digest(&self) -> String {
        digest_parts([format!("len={} overlap={}", self.segment_length, self.overlap)])
    }
}

pub fn clean_text(text: &str, cfg: &CleaningConfig) -> Vec<String> {
    let mut buf = std::borrow::Cow::Borrowed(text);
    if cfg.strip_html {
        // tags become spaces so "a<br>b" stays two words
        buf = HTML_TAG.replace_all(&buf, " ").into_owned().into();
    }
    if cfg.strip_urls {
        buf = URL.replace_all(&buf, " ").into_owned().into();
    }
    if cfg.lowercase {
        buf = buf.to_lowercase().into();
    }
    buf.split_whitespace()
        .filter(|w| !(cfg.remove_stopwords && is_stopword(w)))
        .map(str::to_owned)
        .collect()
}

/// A window into a word list: `words[start..start + len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn slice<'a, T>(&self, words: &'a [T]) -> &'a [T] {
        &words[self.start..self.start + self.len]
    }
}

/// Windows at offsets `0, stride, 2*stride, ...`; the last one may be shorter and is only
/// emitted when words remain uncovered. An empty list yields no windows.
pub fn chunk_words<T>(words: &[T], cfg: &SegmentationConfig) -> Vec<Window> {
    let n = words.len();
    (0..cfg.window_count(n))
        .map(|i| {
            let start = i * cfg.stride();
            Window {
                start,
                len: cfg.segment_length.min(n - start),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_id: String,
    #[serde(rename = "segment_index")]
    pub index: usize,
    pub start: usize,
    pub words: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelVector>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedDocument {
    pub doc_id: String,
    pub labels: Option<LabelVector>,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentedCorpus {
    pub documents: Vec<SegmentedDocument>,
    /// Ids of documents that were empty after cleaning.
    pub skipped: Vec<String>,
}

impl SegmentedCorpus {
    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.documents.iter().flat_map(|d| d.segments.iter())
    }

    pub fn n_segments(&self) -> usize {
        self.documents.iter().map(|d| d.segments.len()).sum()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for seg in self.segments() {
            serde_json::to_writer(&mut out, seg).expect("segment serializes");
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_skip_report(&self, path: &Path) -> Result<()> {
        let mut body = self.skipped.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Reads segment records, grouping consecutive records by `doc_id`.
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut documents: Vec<SegmentedDocument> = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let seg: Segment = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            match documents.last_mut() {
                Some(doc) if doc.doc_id == seg.doc_id => {
                    if seg.index != doc.segments.len() {
                        return Err(malformed(format!(
                            "segment index {} out of order for `{}`",
                            seg.index, seg.doc_id
                        )));
                    }
                    doc.segments.push(seg);
                }
                _ => {
                    if seg.index != 0 {
                        return Err(malformed(format!(
                            "document `{}` does not start at segment 0",
                            seg.doc_id
                        )));
                    }
                    documents.push(SegmentedDocument {
                        doc_id: seg.doc_id.clone(),
                        labels: seg.labels,
                        segments: vec![seg],
                    });
                }
            }
        }
        Ok(SegmentedCorpus {
            documents,
            skipped: Vec::new(),
        })
    }
}

pub fn segment_document(
    doc_id: &str,
    text: &str,
    labels: Option<LabelVector>,
    clean: &CleaningConfig,
    seg: &SegmentationConfig,
) -> SegmentedDocument {
    let words = clean_text(text, clean);
    let segments = chunk_words(&words, seg)
        .into_iter()
        .enumerate()
        .map(|(index, w)| Segment {
            doc_id: doc_id.to_string(),
            index,
            start: w.start,
            words: w.slice(&words).to_vec(),
            labels,
        })
        .collect();
    SegmentedDocument {
        doc_id: doc_id.to_string(),
        labels,
        segments,
    }
}

/// Clean and chunk every document. Output order is (document order, segment index)
/// regardless of how the work is spread over threads.
pub fn segment_corpus(
    corpus: &Corpus,
    clean: &CleaningConfig,
    seg: &SegmentationConfig,
) -> Result<SegmentedCorpus> {
    seg.validate()?;
    let docs: Vec<SegmentedDocument> = corpus
        .documents
        .par_iter()
        .map(|d| segment_document(&d.id, &d.text, d.labels, clean, seg))
        .collect();
    let mut out = SegmentedCorpus::default();
    for doc in docs {
        if doc.segments.is_empty() {
            log::info!("document `{}` is empty after cleaning; skipped", doc.doc_id);
            out.skipped.push(doc.doc_id);
        } else {
            out.documents.push(doc);
        }
    }
    Ok(out)
}
