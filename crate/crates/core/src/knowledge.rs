//! The in-memory knowledge base: passage store, triple store and question
//! index, persisted as a store file plus an index file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PassageStore, StoreError, StoredPassage};
use crate::index::{IndexError, QuestionIndex, SourceKind};
use crate::wikidata::{TripleGroup, TripleStore};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("index has dimension {found}, configured embedder produces {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index references {0} content units that the store does not hold")]
    Dangling(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Status {
    pub entries: usize,
    pub passages: usize,
    pub triples: usize,
    pub dim: usize,
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    passages: Vec<StoredPassage>,
    triples: Vec<TripleGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub passages: PassageStore,
    pub triples: TripleStore,
    pub index: QuestionIndex,
}

impl KnowledgeBase {
    pub fn new(dim: usize) -> Self {
        Self {
            passages: PassageStore::new(),
            triples: TripleStore::new(),
            index: QuestionIndex::new(dim),
        }
    }

    pub fn status(&self) -> Status {
        Status {
            entries: self.index.len(),
            passages: self.passages.len(),
            triples: self.triples.len(),
            dim: self.index.dim(),
        }
    }

    /// Number of distinct indexed hashes with no backing store record.
    pub fn dangling_count(&self) -> usize {
        self.index
            .entries()
            .iter()
            .filter(|e| match e.source_kind {
                SourceKind::Passage => !self.passages.contains(&e.content_hash),
                SourceKind::Triple => !self.triples.contains(&e.content_hash),
            })
            .map(|e| e.content_hash)
            .collect::<std::collections::HashSet<_>>()
            .len()
    }

    pub fn save(&self, store_path: &Path, index_path: &Path) -> Result<usize, KnowledgeError> {
        let file = StoreFile {
            passages: self.passages.records(),
            triples: self.triples.iter().cloned().collect(),
        };
        let json = serde_json::to_vec(&file).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let tmp = store_path.with_extension("tmp");
        fs::write(&tmp, json).map_err(StoreError::from)?;
        fs::rename(&tmp, store_path).map_err(StoreError::from)?;
        Ok(self.index.save(index_path)?)
    }

    /// Loads both files and checks that the index is consistent with the
    /// store and with `expected_dim`.
    pub fn load(store_path: &Path, index_path: &Path, expected_dim: usize) -> Result<Self, KnowledgeError> {
        let bytes = fs::read(store_path).map_err(StoreError::from)?;
        let file: StoreFile = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let passages = PassageStore::from_records(file.passages)?;
        let triples = TripleStore::from_groups(file.triples).map_err(StoreError::Corrupt)?;
        let index = QuestionIndex::load(index_path)?;
        if index.dim() != expected_dim {
            return Err(KnowledgeError::DimensionMismatch {
                expected: expected_dim,
                found: index.dim(),
            });
        }
        let kb = Self { passages, triples, index };
        match kb.dangling_count() {
            0 => Ok(kb),
            n => Err(KnowledgeError::Dangling(n)),
        }
    }
}
