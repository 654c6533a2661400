//! The operations behind both the HTTP API and the CLI.
//!
//! Readers work on an immutable snapshot of the knowledge base. Writers are
//! serialized; each one plans and generates against the current snapshot,
//! commits into a copy, persists it, and then publishes the copy.

use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use q2q_core::corpus::{parse_articles_jsonl, Article, Passage};
use q2q_core::embed::{EmbedError, Embedder, HashEmbedder, HttpEmbedder};
use q2q_core::index::QuestionIndex;
use q2q_core::ingest::{commit_articles, commit_entity, IngestError, IngestReport, Ingestor};
use q2q_core::knowledge::{KnowledgeBase, KnowledgeError};
use q2q_core::qgen::{ContentUnit, Generator, HttpGenerator, PromptTemplates, QuestionGenerator};
use q2q_core::retrieval::{ablation_report, AblationReport, RetrievalError, RetrievalResult, Retriever, SentenceRefiner, Tokenizer};
use q2q_core::wikidata::{fetch_statements, EntityId, SparqlClient};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ServiceConfig};

/// Upper bound on `k` for a single query.
pub const MAX_K: usize = 100;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{0}")]
    BadRequest(String),
    #[error("index is not loaded or holds no entries")]
    NotLoaded,
    #[error("embedding backend failed: {0}")]
    Embedding(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("upstream service failed: {0}")]
    Upstream(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<RetrievalError> for EngineError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::EmptyQuery => EngineError::BadRequest("query must not be empty".into()),
            RetrievalError::EmptyIndex => EngineError::NotLoaded,
            RetrievalError::Embed(e) => EngineError::Embedding(e.to_string()),
            other => EngineError::Internal(other.to_string()),
        }
    }
}

impl From<IngestError> for EngineError {
    fn from(e: IngestError) -> Self {
        EngineError::Internal(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatusReport {
    pub entries: usize,
    pub passages: usize,
    pub triples: usize,
    pub dim: usize,
    pub version: &'static str,
}

pub struct Engine {
    config: ServiceConfig,
    embedder: Arc<dyn Embedder>,
    questions: Option<QuestionGenerator>,
    ingestor: Option<Ingestor>,
    sparql: SparqlClient,
    refiner: SentenceRefiner,
    snapshot: RwLock<Arc<KnowledgeBase>>,
    writer: Mutex<()>,
    persist: bool,
}

fn load_or_empty(config: &ServiceConfig) -> Result<KnowledgeBase, EngineError> {
    let (store, index) = (&config.store_path, &config.index_path);
    match (store.exists(), index.exists()) {
        (true, true) => Ok(KnowledgeBase::load(store, index, config.embedding_dim)?),
        (false, false) => Ok(KnowledgeBase::new(config.embedding_dim)),
        _ => Err(EngineError::Config(ConfigError::Invalid(format!(
            "only one of {} and {} exists",
            store.display(),
            index.display()
        )))),
    }
}

impl Engine {
    /// Builds backends from `config` and loads any persisted knowledge base.
    pub fn from_config(config: ServiceConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let embedder: Arc<dyn Embedder> = match &config.embedding_endpoint {
            Some(url) => Arc::new(
                HttpEmbedder::connect(url, config.embedding_dim, config.embedding_batch_size)
                    .map_err(|e| EngineError::Embedding(e.to_string()))?,
            ),
            None => {
                log::warn!("no embedding endpoint configured; using the offline hash embedder");
                Arc::new(HashEmbedder::new(config.embedding_dim))
            }
        };
        let generator: Option<Arc<dyn Generator>> = config.generation_endpoint.as_ref().map(|url| {
            Arc::new(HttpGenerator::new(
                url.clone(),
                config.generation_max_tokens,
                Duration::from_secs(config.generation_timeout_secs),
            )) as Arc<dyn Generator>
        });
        let kb = load_or_empty(&config)?;
        let mut engine = Self::with_parts(config, kb, embedder, generator)?;
        engine.persist = true;
        Ok(engine)
    }

    /// Assembles an engine from explicit parts. Nothing is persisted unless
    /// [`Engine::persisting`] is enabled.
    pub fn with_parts(
        config: ServiceConfig,
        kb: KnowledgeBase,
        embedder: Arc<dyn Embedder>,
        generator: Option<Arc<dyn Generator>>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if embedder.dim() != config.embedding_dim || kb.index.dim() != config.embedding_dim {
            return Err(EngineError::Config(ConfigError::Invalid(format!(
                "embedding_dim {} disagrees with embedder ({}) or index ({})",
                config.embedding_dim,
                embedder.dim(),
                kb.index.dim()
            ))));
        }
        let templates = PromptTemplates::load(&config.prompts_dir).map_err(|e| EngineError::Config(ConfigError::Invalid(e.to_string())))?;
        let questions = generator.map(|g| QuestionGenerator::new(templates, g).with_max_questions(config.max_questions));
        let ingestor = match &questions {
            Some(qg) => Some(Ingestor::new(qg.clone(), embedder.clone(), config.parallelism)?),
            None => None,
        };
        Ok(Self {
            sparql: SparqlClient::new(config.sparql_endpoint.clone(), config.sparql_requests_per_second),
            refiner: SentenceRefiner::new(Tokenizer::default(), config.tau),
            config,
            embedder,
            questions,
            ingestor,
            snapshot: RwLock::new(Arc::new(kb)),
            writer: Mutex::new(()),
            persist: false,
        })
    }

    pub fn persisting(mut self, on: bool) -> Self {
        self.persist = on;
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// The last committed knowledge base.
    pub fn snapshot(&self) -> Arc<KnowledgeBase> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn status(&self) -> StatusReport {
        let s = self.snapshot().status();
        StatusReport {
            entries: s.entries,
            passages: s.passages,
            triples: s.triples,
            dim: s.dim,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    pub fn query(&self, text: &str, k: Option<usize>) -> Result<Vec<RetrievalResult>, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::BadRequest("query must not be empty".into()));
        }
        let k = k.unwrap_or(self.config.k_default);
        if k == 0 || k > MAX_K {
            return Err(EngineError::BadRequest(format!("k must be between 1 and {MAX_K}")));
        }
        let kb = self.snapshot();
        Ok(Retriever::new(&kb, &*self.embedder)
            .with_refiner(self.refiner.clone())
            .answer(text, k)?)
    }

    fn ingestor(&self) -> Result<&Ingestor, EngineError> {
        self.ingestor
            .as_ref()
            .ok_or_else(|| EngineError::Unavailable("no generation endpoint configured; ingestion is disabled".into()))
    }

    fn publish(&self, kb: KnowledgeBase) -> Result<(), EngineError> {
        if self.persist {
            if let Some(dir) = self.config.store_path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| EngineError::Internal(e.to_string()))?;
            }
            if let Some(dir) = self.config.index_path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| EngineError::Internal(e.to_string()))?;
            }
            kb.save(&self.config.store_path, &self.config.index_path)?;
        }
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(kb);
        Ok(())
    }

    pub fn ingest_jsonl(&self, body: &str, prune: bool) -> Result<IngestReport, EngineError> {
        let articles = parse_articles_jsonl(body).map_err(|e| EngineError::Malformed(e.to_string()))?;
        self.ingest_articles(&articles, prune)
    }

    /// Adds or updates `articles`. With `prune`, stored articles missing
    /// from `articles` are removed.
    pub fn ingest_articles(&self, articles: &[Article], prune: bool) -> Result<IngestReport, EngineError> {
        let ingestor = self.ingestor()?;
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let base = self.snapshot();
        let batch = ingestor.prepare_articles(&base, articles, prune)?;
        let mut next = (*base).clone();
        let report = commit_articles(&mut next, batch);
        self.publish(next)?;
        Ok(report)
    }

    pub fn ingest_wikidata(&self, qid: &str) -> Result<IngestReport, EngineError> {
        let id = EntityId::new(qid).map_err(|e| EngineError::BadRequest(e.to_string()))?;
        let ingestor = self.ingestor()?;
        let fetch = fetch_statements(&self.sparql, id.as_str(), &self.config.language).map_err(|e| EngineError::Upstream(e.to_string()))?;
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let base = self.snapshot();
        let batch = ingestor.prepare_entity(&base, &id, &fetch)?;
        let mut next = (*base).clone();
        let report = commit_entity(&mut next, batch);
        self.publish(next)?;
        Ok(report)
    }

    /// Writes the current index to `path`; returns the byte count.
    pub fn save_index(&self, path: &Path) -> Result<usize, EngineError> {
        Ok(self.snapshot().index.save(path).map_err(KnowledgeError::from)?)
    }

    /// Replaces the index with the one at `path` after checking it against
    /// the configured dimension and the loaded stores.
    pub fn load_index(&self, path: &Path) -> Result<StatusReport, EngineError> {
        let index = QuestionIndex::load(path).map_err(KnowledgeError::from)?;
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let base = self.snapshot();
        if index.dim() != self.config.embedding_dim {
            return Err(KnowledgeError::DimensionMismatch {
                expected: self.config.embedding_dim,
                found: index.dim(),
            }
            .into());
        }
        let next = KnowledgeBase {
            passages: base.passages.clone(),
            triples: base.triples.clone(),
            index,
        };
        match next.dangling_count() {
            0 => self.publish(next)?,
            n => return Err(KnowledgeError::Dangling(n).into()),
        }
        Ok(self.status())
    }

    /// Question-to-question versus question-to-passage scores for `queries`
    /// against one passage. Questions are generated when not supplied.
    pub fn ablation(&self, queries: &[String], passage: &str, questions: Option<Vec<String>>) -> Result<AblationReport, EngineError> {
        let questions = match questions {
            Some(q) => q,
            None => {
                let qg = self
                    .questions
                    .as_ref()
                    .ok_or_else(|| EngineError::Unavailable("no questions given and no generation endpoint configured".into()))?;
                let unit = Passage::new("ablation", "", "", 0, passage).ok_or_else(|| EngineError::BadRequest("passage is empty".into()))?;
                qg.generate_questions(ContentUnit::Passage(&unit))
                    .map_err(|e| EngineError::Upstream(e.to_string()))?
                    .questions
            }
        };
        ablation_report(&*self.embedder, queries, passage, &questions).map_err(|e| match e {
            RetrievalError::Embed(EmbedError::EmptyText) => EngineError::BadRequest("queries, passage and questions must be non-empty".into()),
            other => other.into(),
        })
    }
}
