//! Question-to-question retrieval.
//!
//! Passages and Wikidata statements are indexed by the questions an LLM
//! generates for them; a user query is matched against those questions and
//! answered with the content they came from.

pub mod corpus;
pub mod embed;
pub mod index;
pub mod ingest;
pub mod knowledge;
pub mod qgen;
pub mod retrieval;
pub mod wikidata;

pub use corpus::{content_hash, Article, ContentHash, Passage, PassageStore, SentenceSpan};
pub use embed::{cosine_similarity, Embedder, EmbeddingVector, HashEmbedder, HttpEmbedder};
pub use index::{plan_reindex, IndexEntry, QuestionIndex, ReindexPlan, SearchHit, SourceKind};
pub use ingest::{IngestReport, Ingestor};
pub use knowledge::{KnowledgeBase, Status};
pub use qgen::{parse_question_list, HttpGenerator, PromptTemplates, QuestionGenerator};
pub use retrieval::{jaccard_similarity, refine_to_sentence, RetrievalResult, Retriever};
pub use wikidata::{EntityId, SparqlClient, TripleGroup, TripleStore};
