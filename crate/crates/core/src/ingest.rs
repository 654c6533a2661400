//! Ingestion in two phases. `prepare_*` reads the knowledge base, decides
//! what changed and runs question generation and embedding in parallel;
//! `commit_*` applies the result. Only the commit needs exclusive access.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{split_paragraphs, Article, ContentHash, Passage};
use crate::embed::Embedder;
use crate::index::{plan_reindex, IndexEntry, Insertion, SourceKind};
use crate::knowledge::KnowledgeBase;
use crate::qgen::{ContentUnit, QuestionGenerator};
use crate::wikidata::{group_triples, EntityId, FetchOutcome, TripleGroup};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("ingest configuration: {0}")]
    Config(String),
    #[error("embedder produces dimension {embedder}, index holds {index}")]
    DimensionMismatch { embedder: usize, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailedUnit {
    pub content_hash: ContentHash,
    pub source_kind: SourceKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// Content units seen in the input.
    pub units: usize,
    pub units_added: usize,
    pub units_unchanged: usize,
    pub units_removed: usize,
    pub questions_indexed: usize,
    pub failed_units: Vec<FailedUnit>,
    /// Deprecated or unparseable statements that produced no triple.
    pub skipped_statements: usize,
}

type Generated = Result<Vec<IndexEntry>, String>;

#[derive(Debug)]
pub struct ArticleBatch {
    articles: Vec<(String, Vec<Passage>)>,
    pruned: Vec<String>,
    generated: HashMap<ContentHash, Generated>,
}

#[derive(Debug)]
pub struct EntityBatch {
    qid: EntityId,
    units: usize,
    unchanged: usize,
    skipped: usize,
    to_delete: Vec<ContentHash>,
    generated: Vec<(TripleGroup, Generated)>,
}

pub struct Ingestor {
    questions: QuestionGenerator,
    embedder: Arc<dyn Embedder>,
    pool: rayon::ThreadPool,
}

impl Ingestor {
    pub fn new(questions: QuestionGenerator, embedder: Arc<dyn Embedder>, parallelism: usize) -> Result<Self, IngestError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism.max(1))
            .build()
            .map_err(|e| IngestError::Config(e.to_string()))?;
        Ok(Self {
            questions,
            embedder,
            pool,
        })
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    fn check_dim(&self, kb: &KnowledgeBase) -> Result<(), IngestError> {
        if self.embedder.dim() != kb.index.dim() {
            return Err(IngestError::DimensionMismatch {
                embedder: self.embedder.dim(),
                index: kb.index.dim(),
            });
        }
        Ok(())
    }

    fn generate(&self, unit: ContentUnit<'_>) -> Generated {
        let set = self.questions.generate_questions(unit).map_err(|e| e.to_string())?;
        let texts: Vec<&str> = set.questions.iter().map(String::as_str).collect();
        let vectors = self.embedder.embed_batch(&texts).map_err(|e| e.to_string())?;
        if vectors.len() != texts.len() {
            return Err(format!("embedder returned {} vectors for {} questions", vectors.len(), texts.len()));
        }
        Ok(set
            .questions
            .into_iter()
            .zip(vectors)
            .map(|(question_text, embedding)| IndexEntry {
                question_text,
                embedding,
                content_hash: set.source_hash,
                source_kind: set.source_kind,
            })
            .collect())
    }

    /// Plans an article update. With `prune`, stored articles absent from
    /// `articles` are removed as well.
    pub fn prepare_articles(&self, kb: &KnowledgeBase, articles: &[Article], prune: bool) -> Result<ArticleBatch, IngestError> {
        self.check_dim(kb)?;
        let mut by_id: BTreeMap<String, Vec<Passage>> = BTreeMap::new();
        let mut order = Vec::new();
        for article in articles {
            if by_id.insert(article.article_id.clone(), split_paragraphs(article)).is_none() {
                order.push(article.article_id.clone());
            }
        }
        let pruned = if prune {
            kb.passages.article_ids().into_iter().filter(|id| !by_id.contains_key(id)).collect()
        } else {
            Vec::new()
        };
        let mut seen = HashSet::new();
        let fresh: Vec<&Passage> = order
            .iter()
            .flat_map(|id| &by_id[id])
            .filter(|p| !kb.passages.contains(&p.content_hash) && seen.insert(p.content_hash))
            .collect();
        let generated = self.pool.install(|| {
            fresh
                .par_iter()
                .map(|p| (p.content_hash, self.generate(ContentUnit::Passage(p))))
                .collect()
        });
        let articles = order
            .into_iter()
            .map(|id| {
                let passages = by_id.remove(&id).unwrap_or_default();
                (id, passages)
            })
            .collect();
        Ok(ArticleBatch {
            articles,
            pruned,
            generated,
        })
    }

    /// Plans the update of one Wikidata entity from a fresh fetch. Groups
    /// whose rendered text is unchanged are left alone.
    pub fn prepare_entity(&self, kb: &KnowledgeBase, qid: &EntityId, fetch: &FetchOutcome) -> Result<EntityBatch, IngestError> {
        self.check_dim(kb)?;
        let (groups, deprecated) = group_triples(&fetch.records);
        let old: HashMap<ContentHash, ContentHash> = kb
            .triples
            .groups_for_entity(qid)
            .into_iter()
            .map(|g| (g.fingerprint(), g.triple_key))
            .collect();
        let new: BTreeSet<ContentHash> = groups.iter().map(TripleGroup::fingerprint).collect();
        let plan = plan_reindex(&old.keys().copied().collect(), &new);
        let to_delete = plan.to_delete.iter().map(|fp| old[fp]).collect();
        let changed: Vec<TripleGroup> = groups.iter().filter(|g| plan.to_add.contains(&g.fingerprint())).cloned().collect();
        let generated = self.pool.install(|| {
            changed
                .into_par_iter()
                .map(|g| {
                    let r = self.generate(ContentUnit::Triple(&g));
                    (g, r)
                })
                .collect::<Vec<_>>()
        });
        Ok(EntityBatch {
            qid: qid.clone(),
            units: groups.len(),
            unchanged: groups.len() - generated.len(),
            skipped: deprecated + fetch.skipped_rows,
            to_delete,
            generated,
        })
    }

    pub fn ingest_articles(&self, kb: &mut KnowledgeBase, articles: &[Article], prune: bool) -> Result<IngestReport, IngestError> {
        let batch = self.prepare_articles(kb, articles, prune)?;
        Ok(commit_articles(kb, batch))
    }

    pub fn ingest_entity(&self, kb: &mut KnowledgeBase, qid: &EntityId, fetch: &FetchOutcome) -> Result<IngestReport, IngestError> {
        let batch = self.prepare_entity(kb, qid, fetch)?;
        Ok(commit_entity(kb, batch))
    }
}

fn insert_all(kb: &mut KnowledgeBase, entries: Vec<IndexEntry>) -> usize {
    entries
        .into_iter()
        .filter(|e| matches!(kb.index.insert(e.clone()), Ok(Insertion::Inserted(_))))
        .count()
}

/// Applies an article batch. Passages are stored before their questions
/// are indexed, and removed passages lose their index entries.
pub fn commit_articles(kb: &mut KnowledgeBase, mut batch: ArticleBatch) -> IngestReport {
    let mut report = IngestReport::default();
    let mut removed: BTreeSet<ContentHash> = BTreeSet::new();
    let touched = batch.pruned.iter().chain(batch.articles.iter().map(|(id, _)| id));
    for id in touched {
        for hash in kb.passages.hashes_for_article(id) {
            if kb.passages.detach_article(&hash, id) {
                removed.insert(hash);
            }
        }
    }
    let mut counted = HashSet::new();
    for (_, passages) in batch.articles.drain(..) {
        for passage in passages {
            let hash = passage.content_hash;
            let first = counted.insert(hash);
            if first {
                report.units += 1;
            }
            if kb.passages.contains(&hash) || removed.remove(&hash) {
                kb.passages.put(passage);
                if first {
                    report.units_unchanged += 1;
                }
                continue;
            }
            match batch.generated.remove(&hash) {
                Some(Ok(entries)) => {
                    kb.passages.put(passage);
                    report.questions_indexed += insert_all(kb, entries);
                    report.units_added += 1;
                }
                Some(Err(reason)) => report.failed_units.push(FailedUnit {
                    content_hash: hash,
                    source_kind: SourceKind::Passage,
                    reason,
                }),
                None => report.failed_units.push(FailedUnit {
                    content_hash: hash,
                    source_kind: SourceKind::Passage,
                    reason: "passage was removed after planning; resubmit".into(),
                }),
            }
        }
    }
    for hash in &removed {
        kb.index.delete_by_hash(hash);
    }
    report.units_removed = removed.len();
    report
}

pub fn commit_entity(kb: &mut KnowledgeBase, batch: EntityBatch) -> IngestReport {
    let mut report = IngestReport {
        units: batch.units,
        units_unchanged: batch.unchanged,
        skipped_statements: batch.skipped,
        ..IngestReport::default()
    };
    for key in &batch.to_delete {
        kb.triples.remove(key);
        kb.index.delete_by_hash(key);
    }
    let mut replaced = 0;
    for (group, generated) in batch.generated {
        let key = group.triple_key;
        match generated {
            Ok(entries) => {
                if batch.to_delete.contains(&key) {
                    replaced += 1;
                }
                debug_assert_eq!(group.qid, batch.qid);
                kb.triples.put(group);
                report.questions_indexed += insert_all(kb, entries);
                report.units_added += 1;
            }
            Err(reason) => report.failed_units.push(FailedUnit {
                content_hash: key,
                source_kind: SourceKind::Triple,
                reason,
            }),
        }
    }
    report.units_removed = batch.to_delete.len() - replaced;
    report
}
