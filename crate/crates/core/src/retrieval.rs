//! The answer path: embed the query, take the best-matching generated
//! questions, and return the stored content they were generated from.

use std::collections::HashSet;
use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{ContentHash, Locator, Passage, SentenceSpan};
use crate::embed::{cosine_similarity, embed_text, EmbedError, Embedder};
use crate::index::{IndexError, QuestionIndex, SourceKind};
use crate::knowledge::KnowledgeBase;

/// Minimum sentence Jaccard score before falling back to the paragraph.
pub const DEFAULT_TAU: f64 = 0.3;
pub const DEFAULT_K: usize = 3;

pub const DEFAULT_STOPWORDS: [&str; 50] = [
    "a", "an", "the", "and", "or", "but", "of", "in", "on", "at", "to", "for", "from", "by", "with",
    "as", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "what", "which",
    "who", "whom", "when", "where", "why", "how", "this", "that", "these", "those", "it", "its",
    "he", "she", "they", "his", "her", "their", "there", "has", "have", "had",
];

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("index is empty")]
    EmptyIndex,
    #[error("index entry points at {0}, which no store holds")]
    DanglingHash(ContentHash),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(IndexError),
}

impl From<IndexError> for RetrievalError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyIndex => RetrievalError::EmptyIndex,
            other => RetrievalError::Index(other),
        }
    }
}

/// Lowercase alphanumeric tokens minus stopwords.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new(DEFAULT_STOPWORDS)
    }
}

impl Tokenizer {
    pub fn new<I, S>(stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            stopwords: stopwords.into_iter().map(|s| s.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn tokens(&self, text: &str) -> HashSet<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !self.stopwords.contains(*t))
            .map(str::to_string)
            .collect()
    }
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets scoring 0.
pub fn jaccard_similarity(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone)]
pub struct SentenceRefiner {
    tokenizer: Tokenizer,
    tau: f64,
}

impl Default for SentenceRefiner {
    fn default() -> Self {
        Self::new(Tokenizer::default(), DEFAULT_TAU)
    }
}

impl SentenceRefiner {
    pub fn new(tokenizer: Tokenizer, tau: f64) -> Self {
        Self { tokenizer, tau }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// The best-overlapping sentence and its score, if it reaches `tau`.
    /// Ties go to the earliest sentence.
    pub fn refine(&self, query: &str, passage: &Passage) -> Option<(SentenceSpan, f64)> {
        let q = self.tokenizer.tokens(query);
        let mut best: Option<(SentenceSpan, f64)> = None;
        for &span in &passage.sentences {
            let score = jaccard_similarity(&q, &self.tokenizer.tokens(passage.sentence_text(span)));
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((span, score));
            }
        }
        best.filter(|(_, s)| *s >= self.tau && *s > 0.0)
    }
}

/// The best-matching sentence span, or `None` for paragraph-level context.
pub fn refine_to_sentence(query: &str, passage: &Passage) -> Option<SentenceSpan> {
    SentenceRefiner::default().refine(query, passage).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub matched_question: String,
    pub score: f32,
    pub content_hash: ContentHash,
    pub source_kind: SourceKind,
    pub article: Option<Locator>,
    /// Stored passage text or triple-group text, verbatim.
    pub text: String,
    pub sentence_span: Option<SentenceSpan>,
    pub media_url: Option<String>,
}

pub struct Retriever<'a> {
    kb: &'a KnowledgeBase,
    embedder: &'a dyn Embedder,
    refiner: SentenceRefiner,
}

impl<'a> Retriever<'a> {
    pub fn new(kb: &'a KnowledgeBase, embedder: &'a dyn Embedder) -> Self {
        Self {
            kb,
            embedder,
            refiner: SentenceRefiner::default(),
        }
    }

    pub fn with_refiner(mut self, refiner: SentenceRefiner) -> Self {
        self.refiner = refiner;
        self
    }

    /// Top-`k` results in score order; rank 1 is the answer.
    pub fn answer(&self, query: &str, k: usize) -> Result<Vec<RetrievalResult>, RetrievalError> {
        if query.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        if self.kb.index.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let query_vec = embed_text(query, self.embedder)?;
        let hits = self.kb.index.search_top_k(&query_vec, k)?;
        hits.into_iter()
            .map(|hit| {
                let hash = hit.entry.content_hash;
                let mut result = RetrievalResult {
                    matched_question: hit.entry.question_text,
                    score: hit.score,
                    content_hash: hash,
                    source_kind: hit.entry.source_kind,
                    article: None,
                    text: String::new(),
                    sentence_span: None,
                    media_url: None,
                };
                match hit.entry.source_kind {
                    SourceKind::Passage => {
                        let passage = self.kb.passages.get(&hash).ok_or(RetrievalError::DanglingHash(hash))?;
                        result.article = self.kb.passages.locators(&hash).first().cloned();
                        result.sentence_span = self.refiner.refine(query, passage).map(|(s, _)| s);
                        result.text = passage.text.clone();
                    }
                    SourceKind::Triple => {
                        let group = self.kb.triples.get(&hash).ok_or(RetrievalError::DanglingHash(hash))?;
                        result.text = group.text();
                        result.media_url = group.media_url().map(str::to_string);
                    }
                }
                Ok(result)
            })
            .collect()
    }
}

/// Question-to-passage cosine similarity, the baseline that
/// question-to-question matching is compared against.
pub fn baseline_passage_score(embedder: &dyn Embedder, query: &str, passage_text: &str) -> Result<f32, EmbedError> {
    let q = embed_text(query, embedder)?;
    let p = embed_text(passage_text, embedder)?;
    cosine_similarity(&q, &p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub query: String,
    pub matched_question: String,
    pub q2q_score: f32,
    pub q2p_score: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn mean_q2q(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.q2q_score))
    }

    pub fn mean_q2p(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.q2p_score))
    }

    /// CSV with header `query,matched_question,q2q_score,q2p_score`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean(xs: impl Iterator<Item = f32>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + f64::from(x), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores each query against its best generated question (q2q) and against
/// the whole passage (q2p).
pub fn ablation_report(
    embedder: &dyn Embedder,
    queries: &[String],
    passage_text: &str,
    generated_questions: &[String],
) -> Result<AblationReport, RetrievalError> {
    let mut index = QuestionIndex::new(embedder.dim());
    let texts: Vec<&str> = generated_questions.iter().map(String::as_str).collect();
    let passage_hash = crate::corpus::content_hash(passage_text);
    for (q, v) in generated_questions.iter().zip(embedder.embed_batch(&texts)?) {
        index.insert(crate::index::IndexEntry {
            question_text: q.clone(),
            embedding: v,
            content_hash: passage_hash,
            source_kind: SourceKind::Passage,
        })?;
    }
    let passage_vec = embed_text(passage_text, embedder)?;
    let mut rows = Vec::with_capacity(queries.len());
    for query in queries {
        let qv = embed_text(query, embedder)?;
        let best = index.search_top_k(&qv, 1)?.remove(0);
        rows.push(AblationRow {
            query: query.clone(),
            matched_question: best.entry.question_text,
            q2q_score: best.score,
            q2p_score: cosine_similarity(&qv, &passage_vec)?,
        });
    }
    Ok(AblationReport { rows })
}
