//! The question vector store: generated-question embeddings keyed by the
//! content hash of the unit they were generated from.
//!
//! Search is an exact scan. Ranking is by score, then question text, then
//! content hash, so results are fully deterministic.
//!
//! File layout (little-endian):
//!
//! ```text
//! "Q2QX" | version u8 = 1 | dim u32 | count u64
//! per entry: hash [u8; 32] | kind u8 | len u16 | question [u8; len] | dim x f32
//! crc32 u32 over every preceding byte
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ContentHash;
use crate::embed::EmbeddingVector;

pub const MAGIC: &[u8; 4] = b"Q2QX";
pub const FORMAT_VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Passage,
    Triple,
}

impl SourceKind {
    fn to_byte(self) -> u8 {
        match self {
            SourceKind::Passage => 0,
            SourceKind::Triple => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(SourceKind::Passage),
            1 => Some(SourceKind::Triple),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Passage => "passage",
            SourceKind::Triple => "triple",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub question_text: String,
    pub embedding: EmbeddingVector,
    pub content_hash: ContentHash,
    pub source_kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub entry: IndexEntry,
    pub score: f32,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, entry has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("question is {0} bytes; the file format caps it at 65535")]
    QuestionTooLong(usize),
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("index i/o: {0}")]
    Io(#[from] io::Error),
    #[error("index load failed at byte {offset}: {reason}")]
    Load { offset: usize, reason: String },
}

/// Result of [`QuestionIndex::insert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Inserted(usize),
    AlreadyPresent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    keys: HashSet<(String, ContentHash)>,
}

impl QuestionIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn contains(&self, question: &str, hash: &ContentHash) -> bool {
        self.keys.contains(&(question.to_string(), *hash))
    }

    /// Adds an entry unless the same (question, hash) pair is already held.
    pub fn insert(&mut self, entry: IndexEntry) -> Result<Insertion, IndexError> {
        if entry.embedding.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: entry.embedding.dim(),
            });
        }
        if entry.question_text.is_empty() {
            return Err(IndexError::EmptyQuestion);
        }
        if entry.question_text.len() > usize::from(u16::MAX) {
            return Err(IndexError::QuestionTooLong(entry.question_text.len()));
        }
        let key = (entry.question_text.clone(), entry.content_hash);
        if !self.keys.insert(key) {
            return Ok(Insertion::AlreadyPresent);
        }
        self.entries.push(entry);
        Ok(Insertion::Inserted(self.entries.len() - 1))
    }

    /// Removes every entry for `hash`, returning how many went.
    pub fn delete_by_hash(&mut self, hash: &ContentHash) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| &e.content_hash != hash);
        self.keys.retain(|(_, h)| h != hash);
        before - self.entries.len()
    }

    /// Distinct content hashes referenced by the index.
    pub fn hashes(&self) -> BTreeSet<ContentHash> {
        self.entries.iter().map(|e| e.content_hash).collect()
    }

    pub fn count_by_kind(&self, kind: SourceKind) -> usize {
        self.entries.iter().filter(|e| e.source_kind == kind).count()
    }

    /// The `min(k, len)` best entries by cosine similarity.
    pub fn search_top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let mut scored: Vec<(f32, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (query.dot(&e.embedding).clamp(-1.0, 1.0), i))
            .collect();
        let cmp = |a: &(f32, usize), b: &(f32, usize)| self.rank_order(a, b);
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(score, i)| SearchHit {
                entry: self.entries[i].clone(),
                score,
            })
            .collect())
    }

    fn rank_order(&self, a: &(f32, usize), b: &(f32, usize)) -> Ordering {
        let (ea, eb) = (&self.entries[a.1], &self.entries[b.1]);
        b.0.total_cmp(&a.0)
            .then_with(|| ea.question_text.cmp(&eb.question_text))
            .then_with(|| ea.content_hash.cmp(&eb.content_hash))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body: usize = self.entries.iter().map(|e| 32 + 1 + 2 + e.question_text.len() + 4 * self.dim).sum();
        let mut buf = Vec::with_capacity(17 + body + 4);
        buf.extend_from_slice(MAGIC);
        buf.push(FORMAT_VERSION);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(e.content_hash.as_bytes());
            buf.push(e.source_kind.to_byte());
            buf.extend_from_slice(&(e.question_text.len() as u16).to_le_bytes());
            buf.extend_from_slice(e.question_text.as_bytes());
            for v in e.embedding.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(IndexError::Load {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let version = r.take(1, "version")?[0];
        if version != FORMAT_VERSION {
            return Err(IndexError::Load {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let dim = r.u32("dim")? as usize;
        let count = r.u64("entry count")?;
        // Each entry needs at least 35 bytes plus its vector.
        let min_entry = 35u64 + 4 * dim as u64;
        if count.saturating_mul(min_entry) > (bytes.len() - r.pos) as u64 {
            return Err(IndexError::Load {
                offset: r.pos - 8,
                reason: format!("entry count {count} exceeds file size"),
            });
        }
        let mut index = QuestionIndex::new(dim);
        for _ in 0..count {
            let entry_start = r.pos;
            let hash: [u8; 32] = r.take(32, "content hash")?.try_into().expect("32 bytes");
            let kind_at = r.pos;
            let kind = SourceKind::from_byte(r.take(1, "source kind")?[0]).ok_or(IndexError::Load {
                offset: kind_at,
                reason: "unknown source kind".into(),
            })?;
            let len = r.u16("question length")? as usize;
            let text_at = r.pos;
            let question = std::str::from_utf8(r.take(len, "question text")?)
                .map_err(|e| IndexError::Load {
                    offset: text_at,
                    reason: format!("question is not UTF-8: {e}"),
                })?
                .to_string();
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(f32::from_le_bytes(r.take(4, "vector")?.try_into().expect("4 bytes")));
            }
            let entry = IndexEntry {
                question_text: question,
                embedding: EmbeddingVector::from_stored(values),
                content_hash: ContentHash::from_bytes(hash),
                source_kind: kind,
            };
            match index.insert(entry) {
                Ok(Insertion::Inserted(_)) => {}
                Ok(Insertion::AlreadyPresent) => {
                    return Err(IndexError::Load {
                        offset: entry_start,
                        reason: "duplicate entry".into(),
                    })
                }
                Err(e) => {
                    return Err(IndexError::Load {
                        offset: entry_start,
                        reason: e.to_string(),
                    })
                }
            }
        }
        let crc_at = r.pos;
        let stored = r.u32("crc")?;
        let computed = crc32fast::hash(&bytes[..crc_at]);
        if stored != computed {
            return Err(IndexError::Load {
                offset: crc_at,
                reason: format!("crc mismatch: stored {stored:#010x}, computed {computed:#010x}"),
            });
        }
        if r.pos != bytes.len() {
            return Err(IndexError::Load {
                offset: r.pos,
                reason: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(index)
    }

    /// Writes the index file and returns its size in bytes.
    pub fn save(&self, path: &Path) -> Result<usize, IndexError> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(bytes.len())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IndexError> {
        if self.bytes.len() - self.pos < n {
            return Err(IndexError::Load {
                offset: self.pos,
                reason: format!("truncated while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16, IndexError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReindexPlan {
    pub to_delete: BTreeSet<ContentHash>,
    pub to_add: BTreeSet<ContentHash>,
}

impl ReindexPlan {
    pub fn is_noop(&self) -> bool {
        self.to_delete.is_empty() && self.to_add.is_empty()
    }
}

pub fn plan_reindex(old_hashes: &BTreeSet<ContentHash>, new_hashes: &BTreeSet<ContentHash>) -> ReindexPlan {
    ReindexPlan {
        to_delete: old_hashes.difference(new_hashes).copied().collect(),
        to_add: new_hashes.difference(old_hashes).copied().collect(),
    }
}
