//! Question generation: prompt templates, the text-generation client, and
//! parsing of bullet-list output into question sets.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ContentHash, Passage};
use crate::index::SourceKind;
use crate::wikidata::TripleGroup;

pub const PASSAGE_PROMPT_FILE: &str = "passage_questions.txt";
pub const TRIPLE_PROMPT_FILE: &str = "triple_questions.txt";

/// Per-unit cap on generated questions; extra questions are dropped.
pub const DEFAULT_MAX_QUESTIONS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QgenError {
    #[error("prompt configuration: {0}")]
    Config(String),
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("no questions found in generator output")]
    MalformedOutput { raw: String },
    #[error("generation endpoint failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
}

/// Questions generated for one content unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub source_hash: ContentHash,
    pub source_kind: SourceKind,
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_questions: usize,
    pub model_hint: String,
}

/// The two prompt templates, loaded from disk once at startup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    passage: String,
    triple: String,
}

impl PromptTemplates {
    /// Reads `passage_questions.txt` and `triple_questions.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, QgenError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| QgenError::Config(format!("{}: {e}", path.display())))
        };
        Self::from_strings(read(PASSAGE_PROMPT_FILE)?, read(TRIPLE_PROMPT_FILE)?)
    }

    pub fn from_strings(passage: String, triple: String) -> Result<Self, QgenError> {
        for slot in ["{{article_title}}", "{{section_title}}", "{{passage}}"] {
            if !passage.contains(slot) {
                return Err(QgenError::Config(format!("passage template lacks {slot}")));
            }
        }
        if !triple.contains("{{triple}}") {
            return Err(QgenError::Config("triple template lacks {{triple}}".into()));
        }
        Ok(Self { passage, triple })
    }

    pub fn passage_template(&self) -> &str {
        &self.passage
    }

    pub fn triple_template(&self) -> &str {
        &self.triple
    }

    pub fn build_passage_prompt(
        &self,
        article_title: &str,
        section_title: &str,
        passage_text: &str,
    ) -> Result<String, QgenError> {
        if passage_text.trim().is_empty() {
            return Err(QgenError::EmptyInput("passage text"));
        }
        Ok(fill(
            &self.passage,
            &[
                ("article_title", article_title),
                ("section_title", section_title),
                ("passage", passage_text),
            ],
        ))
    }

    pub fn build_triple_prompt(&self, triple_text: &str) -> Result<String, QgenError> {
        if triple_text.trim().is_empty() {
            return Err(QgenError::EmptyInput("triple text"));
        }
        Ok(fill(&self.triple, &[("triple", triple_text)]))
    }
}

/// Single-pass `{{name}}` substitution; substituted values are never rescanned.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let replaced = after.find("}}").and_then(|close| {
            let name = &after[..close];
            slots
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| (*v, open + 2 + close + 2))
        });
        match replaced {
            Some((value, consumed)) => {
                out.push_str(value);
                rest = &rest[consumed..];
            }
            None => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn strip_marker(line: &str) -> Option<&str> {
    let line = line.trim();
    for bullet in ['-', '*', '•'] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return Some(rest.trim());
        }
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = line[digits..].strip_prefix(['.', ')']) {
            return Some(rest.trim());
        }
    }
    None
}

/// Extracts bulleted or numbered questions from generator output.
///
/// Items must end in `?`, or in `.` for requests such as "Show me the flag
/// of India."; unmarked lines and other items are ignored. Duplicates
/// (ignoring case) keep their first occurrence.
pub fn parse_question_list(raw_output: &str) -> Result<Vec<String>, QgenError> {
    let mut seen = std::collections::HashSet::new();
    let mut questions = Vec::new();
    for line in raw_output.lines() {
        let Some(q) = strip_marker(line) else { continue };
        if !q.ends_with(['?', '.']) || !q.chars().any(char::is_alphabetic) {
            continue;
        }
        if seen.insert(q.to_lowercase()) {
            questions.push(q.to_string());
        }
    }
    if questions.is_empty() {
        return Err(QgenError::MalformedOutput {
            raw: raw_output.to_string(),
        });
    }
    Ok(questions)
}

/// A text-generation backend.
pub trait Generator: Send + Sync {
    /// Returns the raw completion text. Errors are treated as retryable.
    fn generate(&self, request: &GenerationRequest) -> Result<String, String>;
}

impl<F> Generator for F
where
    F: Fn(&GenerationRequest) -> Result<String, String> + Send + Sync,
{
    fn generate(&self, request: &GenerationRequest) -> Result<String, String> {
        self(request)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// `POST {url}` with `{"prompt": ..., "max_tokens": n}` returning `{"text": ...}`.
pub struct HttpGenerator {
    agent: ureq::Agent,
    url: String,
    max_tokens: u32,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>, max_tokens: u32, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            url: url.into(),
            max_tokens,
        }
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<String, String> {
        let resp: CompletionResponse = self
            .agent
            .post(&self.url)
            .send_json(CompletionRequest {
                prompt: &request.prompt,
                max_tokens: self.max_tokens,
            })
            .map_err(|e| e.to_string())?
            .body_mut()
            .read_json()
            .map_err(|e| format!("bad completion body: {e}"))?;
        Ok(resp.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt)
    }
}

/// A unit questions are generated for.
#[derive(Debug, Clone, Copy)]
pub enum ContentUnit<'a> {
    Passage(&'a Passage),
    Triple(&'a TripleGroup),
}

impl ContentUnit<'_> {
    pub fn hash(&self) -> ContentHash {
        match self {
            ContentUnit::Passage(p) => p.content_hash,
            ContentUnit::Triple(t) => t.triple_key,
        }
    }

    pub fn kind(&self) -> SourceKind {
        match self {
            ContentUnit::Passage(_) => SourceKind::Passage,
            ContentUnit::Triple(_) => SourceKind::Triple,
        }
    }
}

#[derive(Clone)]
pub struct QuestionGenerator {
    templates: PromptTemplates,
    llm: Arc<dyn Generator>,
    retry: RetryPolicy,
    max_questions: usize,
    model_hint: String,
}

impl QuestionGenerator {
    pub fn new(templates: PromptTemplates, llm: Arc<dyn Generator>) -> Self {
        Self {
            templates,
            llm,
            retry: RetryPolicy::default(),
            max_questions: DEFAULT_MAX_QUESTIONS,
            model_hint: String::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_questions(mut self, max: usize) -> Self {
        self.max_questions = max.max(1);
        self
    }

    pub fn with_model_hint(mut self, hint: impl Into<String>) -> Self {
        self.model_hint = hint.into();
        self
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    fn prompt_for(&self, unit: ContentUnit<'_>) -> Result<String, QgenError> {
        match unit {
            ContentUnit::Passage(p) => {
                self.templates
                    .build_passage_prompt(&p.article_title, &p.section_title, &p.text)
            }
            ContentUnit::Triple(t) => self.templates.build_triple_prompt(&t.text()),
        }
    }

    /// Prompts the generator for `unit`, retrying transport failures and
    /// unparseable output with exponential backoff.
    pub fn generate_questions(&self, unit: ContentUnit<'_>) -> Result<QuestionSet, QgenError> {
        let request = GenerationRequest {
            prompt: self.prompt_for(unit)?,
            max_questions: self.max_questions,
            model_hint: self.model_hint.clone(),
        };
        let attempts = self.retry.attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            match self.llm.generate(&request) {
                Ok(raw) => match parse_question_list(&raw) {
                    Ok(mut questions) => {
                        questions.truncate(request.max_questions);
                        return Ok(QuestionSet {
                            source_hash: unit.hash(),
                            source_kind: unit.kind(),
                            questions,
                        });
                    }
                    Err(e) => last = Some(e),
                },
                Err(message) => {
                    log::warn!("generation attempt {} failed: {message}", attempt + 1);
                    last = Some(QgenError::Transport { attempts, message });
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
