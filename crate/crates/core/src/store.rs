//! Append-only binary embedding store with a sidecar offset index.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header:  magic "TWEMBSTO" | version u32 | dim u32 | count u64 | fingerprint [u8; 32]
//! record:  id_len u32 | id bytes | n_segments u32 | n_segments * dim f32
//! ```
//!
//! `count` is written as zero while the store is being built and patched when the writer
//! finishes, together with the `<store>.idx` sidecar (JSON lines of
//! `{"doc_id", "offset", "n_segments"}`). A store without a matching sidecar is incomplete.
//! Finished stores are memory-mapped and read without locks.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use memmap2::Mmap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::{digest_parts, sha256_bytes};
use crate::encoder::{EmbeddingSequence, SegmentEncoder};
use crate::segmenter::{CleaningConfig, SegmentationConfig, SegmentedCorpus};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TWEMBSTO";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 8 + 4 + 4 + 8 + 32;
const COUNT_OFFSET: u64 = 16;

/// Cache key: encoder identity plus the segmentation and cleaning that produced the inputs.
pub fn store_fingerprint(
    encoder_fingerprint: &str,
    seg: &SegmentationConfig,
    clean: &CleaningConfig,
) -> String {
    digest_parts([encoder_fingerprint.to_string(), seg.digest(), clean.digest()])
}

pub fn index_path(store: &Path) -> PathBuf {
    let mut s = store.as_os_str().to_owned();
    s.push(".idx");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub doc_id: String,
    pub offset: u64,
    pub n_segments: u32,
}

pub struct StoreWriter {
    path: PathBuf,
    out: BufWriter<File>,
    dim: usize,
    offset: u64,
    entries: Vec<IndexEntry>,
}

impl StoreWriter {
    pub fn create(path: &Path, dim: usize, fingerprint: &str) -> Result<Self> {
        let _ = std::fs::remove_file(index_path(path));
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut header = Vec::with_capacity(HEADER_LEN as usize);
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&(dim as u32).to_le_bytes());
        header.extend_from_slice(&0u64.to_le_bytes());
        header.extend_from_slice(&sha256_bytes(fingerprint));
        out.write_all(&header).map_err(|e| Error::io(path, e))?;
        Ok(StoreWriter {
            path: path.to_path_buf(),
            out,
            dim,
            offset: HEADER_LEN,
            entries: Vec::new(),
        })
    }

    pub fn append(&mut self, seq: &EmbeddingSequence) -> Result<()> {
        if seq.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: seq.dim,
            });
        }
        if seq.is_empty() {
            return Err(Error::Store {
                path: self.path.clone(),
                message: format!("document `{}` has no segments", seq.doc_id),
            });
        }
        let id = seq.doc_id.as_bytes();
        let mut buf = Vec::with_capacity(8 + id.len() + seq.data.len() * 4);
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&(seq.len() as u32).to_le_bytes());
        for x in &seq.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.out.write_all(&buf).map_err(|e| Error::io(&self.path, e))?;
        self.entries.push(IndexEntry {
            doc_id: seq.doc_id.clone(),
            offset: self.offset,
            n_segments: seq.len() as u32,
        });
        self.offset += buf.len() as u64;
        Ok(())
    }

    /// Patch the header count, write the sidecar index and reopen read-only.
    pub fn finish(self) -> Result<EmbeddingStore> {
        let path = self.path;
        let mut file = self
            .out
            .into_inner()
            .map_err(|e| Error::io(&path, e.into_error()))?;
        file.seek(SeekFrom::Start(COUNT_OFFSET))
            .and_then(|_| file.write_all(&(self.entries.len() as u64).to_le_bytes()))
            .and_then(|_| file.sync_all())
            .map_err(|e| Error::io(&path, e))?;
        drop(file);

        let idx = index_path(&path);
        let tmp = idx.with_extension("idx.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
            for entry in &self.entries {
                serde_json::to_writer(&mut out, entry).expect("index entry serializes");
                out.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
            }
            out.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, &idx).map_err(|e| Error::io(&idx, e))?;
        EmbeddingStore::open(&path)
    }
}

/// A finished, read-only embedding store.
pub struct EmbeddingStore {
    path: PathBuf,
    map: Mmap,
    dim: usize,
    fingerprint: String,
    entries: Vec<IndexEntry>,
    by_id: HashMap<String, usize>,
}

impl std::fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("path", &self.path)
            .field("dim", &self.dim)
            .field("documents", &self.entries.len())
            .finish()
    }
}

impl EmbeddingStore {
    pub fn open(path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Store {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        // SAFETY: finished stores are never modified in place; writers recreate the file.
        let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
        if map.len() < HEADER_LEN as usize || &map[..8] != MAGIC {
            return Err(bad("not an embedding store".into()));
        }
        let version = u32::from_le_bytes(map[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(map[12..16].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(map[16..24].try_into().unwrap()) as usize;
        let fingerprint = hex::encode(&map[24..56]);

        let idx = index_path(path);
        let idx_file = File::open(&idx).map_err(|_| bad("incomplete: missing index".into()))?;
        let mut entries = Vec::with_capacity(count);
        for line in BufReader::new(idx_file).lines() {
            let line = line.map_err(|e| Error::io(&idx, e))?;
            let entry: IndexEntry =
                serde_json::from_str(&line).map_err(|e| bad(format!("index: {e}")))?;
            let end = entry.offset
                + 8
                + entry.doc_id.len() as u64
                + entry.n_segments as u64 * dim as u64 * 4;
            if end > map.len() as u64 {
                return Err(bad(format!("truncated record for `{}`", entry.doc_id)));
            }
            entries.push(entry);
        }
        if entries.len() != count {
            return Err(bad(format!(
                "incomplete: header counts {count} documents, index has {}",
                entries.len()
            )));
        }
        let by_id = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.doc_id.clone(), i))
            .collect();
        Ok(EmbeddingStore {
            path: path.to_path_buf(),
            map,
            dim,
            fingerprint,
            entries,
            by_id,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn get(&self, i: usize) -> EmbeddingSequence {
        let entry = &self.entries[i];
        let mut pos = entry.offset as usize;
        let id_len = u32::from_le_bytes(self.map[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4 + id_len;
        pos += 4;
        let n = entry.n_segments as usize * self.dim;
        let data = self.map[pos..pos + n * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        EmbeddingSequence {
            doc_id: entry.doc_id.clone(),
            dim: self.dim,
            data,
        }
    }

    pub fn get_by_id(&self, doc_id: &str) -> Option<EmbeddingSequence> {
        self.position(doc_id).map(|i| self.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = EmbeddingSequence> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedReport {
    /// Segments run through the encoder in this call.
    pub computed_segments: usize,
    pub up_to_date: bool,
}

/// Embed every document of `segments` into the store at `path`.
///
/// An existing complete store with the same fingerprint and documents is reused as is;
/// a store built under a different fingerprint is refused.
pub fn embed_corpus(
    encoder: &dyn SegmentEncoder,
    segments: &SegmentedCorpus,
    seg: &SegmentationConfig,
    clean: &CleaningConfig,
    path: &Path,
) -> Result<(EmbeddingStore, EmbedReport)> {
    let fingerprint = store_fingerprint(&encoder.fingerprint(), seg, clean);
    if path.exists() {
        match EmbeddingStore::open(path) {
            Ok(store) => {
                if store.fingerprint() != fingerprint {
                    return Err(Error::FingerprintMismatch {
                        expected: fingerprint,
                        found: store.fingerprint().to_string(),
                    });
                }
                let same_docs = store.len() == segments.documents.len()
                    && store
                        .entries()
                        .iter()
                        .zip(&segments.documents)
                        .all(|(e, d)| e.doc_id == d.doc_id && e.n_segments as usize == d.segments.len());
                if same_docs {
                    return Ok((
                        store,
                        EmbedReport {
                            computed_segments: 0,
                            up_to_date: true,
                        },
                    ));
                }
                log::warn!("{}: document set changed; rebuilding", path.display());
            }
            Err(e) => log::warn!("{}: {e}; rebuilding", path.display()),
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }

    let dim = encoder.dim();
    let mut writer = StoreWriter::create(path, dim, &fingerprint)?;
    let mut computed = 0;
    for chunk in segments.documents.chunks(64) {
        let sequences: Vec<EmbeddingSequence> = chunk
            .par_iter()
            .map(|doc| {
                let words: Vec<&[String]> =
                    doc.segments.iter().map(|s| s.words.as_slice()).collect();
                let rows = encoder.embed_batch(&words)?;
                EmbeddingSequence::new(doc.doc_id.clone(), dim, rows)
            })
            .collect::<Result<_>>()?;
        for seq in &sequences {
            computed += seq.len();
            writer.append(seq)?;
        }
    }
    let store = writer.finish()?;
    Ok((
        store,
        EmbedReport {
            computed_segments: computed,
            up_to_date: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document};
    use crate::encoder::ReferenceEncoder;
    use crate::segmenter::segment_corpus;

    fn corpus(sizes: &[usize]) -> Corpus {
        Corpus::new(
            sizes
                .iter()
                .enumerate()
                .map(|(d, &n)| Document {
                    id: format!("doc{d}"),
                    text: (0..n).map(|i| format!("w{d}x{i}")).collect::<Vec<_>>().join(" "),
                    labels: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn setup(sizes: &[usize], seg: SegmentationConfig) -> SegmentedCorpus {
        segment_corpus(&corpus(sizes), &CleaningConfig::default(), &seg).unwrap()
    }

    #[test]
    fn sequences_match_segment_counts_and_rerun_is_noop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.emb");
        let seg = SegmentationConfig::default();
        // 3, 1 and 2 windows
        let segments = setup(&[500, 100, 300], seg);
        let enc = ReferenceEncoder::new(16, 1).unwrap();
        let (store, report) =
            embed_corpus(&enc, &segments, &seg, &CleaningConfig::default(), &path).unwrap();
        assert_eq!(report.computed_segments, 6);
        let lens: Vec<usize> = store.iter().map(|s| s.len()).collect();
        assert_eq!(lens, vec![3, 1, 2]);
        assert!(store.iter().all(|s| s.dim == 16));

        let expected = enc.embed(&segments.documents[0].segments[1]).unwrap().vector;
        assert_eq!(store.get_by_id("doc0").unwrap().row(1), expected.as_slice());

        let (_, again) =
            embed_corpus(&enc, &segments, &seg, &CleaningConfig::default(), &path).unwrap();
        assert_eq!(again.computed_segments, 0);
        assert!(again.up_to_date);
    }

    #[test]
    fn different_segmentation_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.emb");
        let enc = ReferenceEncoder::new(16, 1).unwrap();
        let seg = SegmentationConfig::default();
        embed_corpus(&enc, &setup(&[300], seg), &seg, &CleaningConfig::default(), &path).unwrap();
        let other = SegmentationConfig::new(100, 20).unwrap();
        let err = embed_corpus(&enc, &setup(&[300], other), &other, &CleaningConfig::default(), &path)
            .unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }));
    }

    #[test]
    fn incomplete_store_is_rebuilt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let enc = ReferenceEncoder::new(16, 1).unwrap();
        let seg = SegmentationConfig::default();
        let segments = setup(&[300, 300], seg);
        let mut w = StoreWriter::create(&path, 16, "00").unwrap();
        let rows = enc
            .embed_batch(&[segments.documents[0].segments[0].words.as_slice()])
            .unwrap();
        w.append(&EmbeddingSequence::new("doc0", 16, rows).unwrap()).unwrap();
        drop(w); // never finished: no index, count 0
        assert!(EmbeddingStore::open(&path).is_err());
        let (store, report) =
            embed_corpus(&enc, &segments, &seg, &CleaningConfig::default(), &path).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(report.computed_segments, 4);
    }

    #[test]
    fn truncated_file_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let mut w = StoreWriter::create(&path, 8, "ab").unwrap();
        w.append(&EmbeddingSequence::new("x", 8, vec![vec![1.0; 8]; 2]).unwrap()).unwrap();
        let store = w.finish().unwrap();
        assert_eq!(&store.fingerprint()[..2], "ab");
        drop(store);
        std::fs::OpenOptions::new()
            .write(true)
            .open(&path)
            .unwrap()
            .set_len(HEADER_LEN + 10)
            .unwrap();
        assert!(EmbeddingStore::open(&path).is_err());
    }

    #[test]
    fn dimension_mismatch_on_append() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = StoreWriter::create(&dir.path().join("s.emb"), 8, "").unwrap();
        let seq = EmbeddingSequence::new("x", 4, vec![vec![0.0; 4]]).unwrap();
        assert!(matches!(w.append(&seq), Err(Error::DimensionMismatch { .. })));
    }
}
