//! Article ingestion: text normalization, paragraph and sentence splitting,
//! content hashing, and the hash-addressed passage store.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A 32-byte SHA-256 digest identifying a content unit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash([u8; 32]);

impl ContentHash {
    pub const LEN: usize = 32;

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// 64 lowercase hex characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", &self.to_hex()[..12])
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid content hash: {0}")]
pub struct ParseHashError(String);

impl FromStr for ContentHash {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| ParseHashError(e.to_string()))?;
        let digest: [u8; 32] = bytes
            .try_into()
            .map_err(|v: Vec<u8>| ParseHashError(format!("expected 32 bytes, got {}", v.len())))?;
        Ok(Self(digest))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of the UTF-8 bytes of `text`, with no trailing newline added.
pub fn content_hash(text: &str) -> ContentHash {
    hash_bytes(text.as_bytes())
}

pub(crate) fn hash_bytes(bytes: &[u8]) -> ContentHash {
    let digest: [u8; 32] = Sha256::digest(bytes).into();
    ContentHash(digest)
}

/// One input article, as read from the JSON Lines ingest format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    #[serde(rename = "id")]
    pub article_id: String,
    pub title: String,
    #[serde(default)]
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Error)]
pub enum ArticleError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: article {id:?} has an empty title")]
    EmptyTitle { line: usize, id: String },
}

/// Parses the JSON Lines ingest format, one article per non-blank line.
pub fn parse_articles_jsonl(input: &str) -> Result<Vec<Article>, ArticleError> {
    let mut articles = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let article: Article =
            serde_json::from_str(line).map_err(|source| ArticleError::Json { line: i + 1, source })?;
        if article.title.trim().is_empty() {
            return Err(ArticleError::EmptyTitle {
                line: i + 1,
                id: article.article_id,
            });
        }
        articles.push(article);
    }
    Ok(articles)
}

/// Byte range `[start, end)` into a passage's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
}

impl SentenceSpan {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

/// A paragraph-level content unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub content_hash: ContentHash,
    pub article_id: String,
    pub article_title: String,
    pub section_title: String,
    pub paragraph_index: usize,
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
}

impl Passage {
    /// Builds a passage from already-normalized text, computing its hash and
    /// sentence spans. Returns `None` when the text is empty.
    pub fn new(
        article_id: impl Into<String>,
        article_title: impl Into<String>,
        section_title: impl Into<String>,
        paragraph_index: usize,
        text: impl Into<String>,
    ) -> Option<Self> {
        let text = text.into();
        if text.is_empty() {
            return None;
        }
        Some(Self {
            content_hash: content_hash(&text),
            sentences: split_sentences(&text),
            article_id: article_id.into(),
            article_title: article_title.into(),
            section_title: section_title.into(),
            paragraph_index,
            text,
        })
    }

    pub fn locator(&self) -> Locator {
        Locator {
            article_id: self.article_id.clone(),
            article_title: self.article_title.clone(),
            section_title: self.section_title.clone(),
            paragraph_index: self.paragraph_index,
        }
    }

    pub fn sentence_text(&self, span: SentenceSpan) -> &str {
        span.slice(&self.text)
    }
}

fn reference_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\[(?:\d+|citation needed)\]").expect("valid regex"))
}

/// Removes `[n]` and `[citation needed]` markers, collapses whitespace runs
/// to single spaces, and trims.
pub fn normalize_text(raw: &str) -> String {
    let stripped = reference_marker().replace_all(raw, " ");
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits an article into one passage per blank-line-delimited block.
///
/// Paragraph indices run across the whole article in document order and
/// skip blocks that normalize to nothing.
pub fn split_paragraphs(article: &Article) -> Vec<Passage> {
    let mut passages = Vec::new();
    for section in &article.sections {
        for block in blocks(&section.text) {
            let text = normalize_text(&block);
            if let Some(p) = Passage::new(
                &article.article_id,
                &article.title,
                &section.title,
                passages.len(),
                text,
            ) {
                passages.push(p);
            }
        }
    }
    passages
}

fn blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Words that end in a period without ending a sentence.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.", "Jr.", "Sr.", "Mt.", "Gen.", "Gov.", "Sen.",
    "Rep.", "Rev.", "Col.", "Lt.", "Capt.", "Sgt.", "Inc.", "Ltd.", "Co.", "Corp.", "vs.", "e.g.",
    "i.e.", "approx.", "No.", "Jan.", "Feb.", "Mar.", "Apr.", "Jun.", "Jul.", "Aug.", "Sep.",
    "Sept.", "Oct.", "Nov.", "Dec.", "U.S.", "U.K.", "U.N.", "D.C.", "c.", "ca.",
];

/// Sentence splitter: breaks after `.`, `!` or `?` (plus any closing quotes
/// or brackets) when followed by whitespace and an uppercase letter or digit,
/// unless the word carrying the period is a guarded abbreviation.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: Vec<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self::new(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl SentenceSplitter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            abbreviations: abbreviations.into_iter().map(Into::into).collect(),
        }
    }

    fn is_guarded(&self, word: &str) -> bool {
        if self.abbreviations.iter().any(|a| a == word) {
            return true;
        }
        // Single-letter initials ("F.") never end a sentence here.
        let mut chars = word.chars();
        matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_uppercase())
    }

    pub fn split(&self, text: &str) -> Vec<SentenceSpan> {
        let mut spans = Vec::new();
        let bytes = text.as_bytes();
        let mut start = skip_whitespace(text, 0);
        let mut i = start;
        while i < bytes.len() {
            let b = bytes[i];
            if !matches!(b, b'.' | b'!' | b'?') {
                i += 1;
                continue;
            }
            let mut end = i + 1;
            while end < bytes.len() && matches!(bytes[end], b'.' | b'!' | b'?') {
                end += 1;
            }
            end = skip_closers(text, end);
            let next = skip_whitespace(text, end);
            let boundary = next > end
                && text[next..]
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit());
            if boundary && !(b == b'.' && self.is_guarded(word_before(text, start, i + 1))) {
                spans.push(SentenceSpan { start, end });
                start = next;
                i = next;
            } else {
                i = end.max(i + 1);
            }
        }
        let end = text.trim_end().len();
        if start < end {
            spans.push(SentenceSpan { start, end });
        }
        spans
    }
}

fn skip_whitespace(text: &str, from: usize) -> usize {
    text[from..]
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map_or(text.len(), |(off, _)| from + off)
}

fn skip_closers(text: &str, from: usize) -> usize {
    text[from..]
        .char_indices()
        .find(|(_, c)| !matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}'))
        .map_or(text.len(), |(off, _)| from + off)
}

/// The whitespace-delimited word ending at byte `end` (exclusive).
fn word_before(text: &str, floor: usize, end: usize) -> &str {
    let head = &text[floor..end];
    let start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map_or(0, |(off, c)| off + c.len_utf8());
    head[start..].trim_start_matches(['(', '"', '\'', '\u{201C}'])
}

/// Splits with the default abbreviation guard list.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    SentenceSplitter::default().split(text)
}

/// Where a passage occurs. Identical paragraph text in several places shares
/// one stored record carrying several locators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Locator {
    pub article_id: String,
    pub article_title: String,
    pub section_title: String,
    pub paragraph_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPassage {
    pub passage: Passage,
    pub locators: Vec<Locator>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corrupted store file: {0}")]
    Corrupt(String),
}

/// Hash-addressed passage lookup, persisted as a single JSON file and held
/// in memory at runtime.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PassageStore {
    records: BTreeMap<ContentHash, StoredPassage>,
}

impl PassageStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Stores a passage. Returns `true` when a new record was created; a
    /// duplicate text only gains the new locator.
    pub fn put(&mut self, passage: Passage) -> bool {
        let locator = passage.locator();
        match self.records.get_mut(&passage.content_hash) {
            Some(rec) => {
                if !rec.locators.contains(&locator) {
                    rec.locators.push(locator);
                }
                false
            }
            None => {
                self.records.insert(
                    passage.content_hash,
                    StoredPassage {
                        passage,
                        locators: vec![locator],
                    },
                );
                true
            }
        }
    }

    pub fn get(&self, hash: &ContentHash) -> Option<&Passage> {
        self.records.get(hash).map(|r| &r.passage)
    }

    pub fn contains(&self, hash: &ContentHash) -> bool {
        self.records.contains_key(hash)
    }

    pub fn locators(&self, hash: &ContentHash) -> &[Locator] {
        self.records.get(hash).map_or(&[], |r| &r.locators)
    }

    /// Hashes of every passage that has a locator in `article_id`.
    pub fn hashes_for_article(&self, article_id: &str) -> Vec<ContentHash> {
        self.records
            .iter()
            .filter(|(_, r)| r.locators.iter().any(|l| l.article_id == article_id))
            .map(|(h, _)| *h)
            .collect()
    }

    pub fn article_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .records
            .values()
            .flat_map(|r| r.locators.iter().map(|l| l.article_id.clone()))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Drops the record's locators for `article_id`. Returns `true` when the
    /// record lost its last locator and was removed.
    pub fn detach_article(&mut self, hash: &ContentHash, article_id: &str) -> bool {
        let Some(rec) = self.records.get_mut(hash) else {
            return false;
        };
        rec.locators.retain(|l| l.article_id != article_id);
        if rec.locators.is_empty() {
            self.records.remove(hash);
            return true;
        }
        let first = rec.locators[0].clone();
        rec.passage.article_id = first.article_id;
        rec.passage.article_title = first.article_title;
        rec.passage.section_title = first.section_title;
        rec.passage.paragraph_index = first.paragraph_index;
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredPassage> {
        self.records.values()
    }

    pub fn records(&self) -> Vec<StoredPassage> {
        self.records.values().cloned().collect()
    }

    /// Rebuilds a store from persisted records, rejecting any whose hash
    /// disagrees with its text.
    pub fn from_records(records: Vec<StoredPassage>) -> Result<Self, StoreError> {
        let mut map = BTreeMap::new();
        for rec in records {
            let actual = content_hash(&rec.passage.text);
            if actual != rec.passage.content_hash {
                return Err(StoreError::Corrupt(format!(
                    "passage {} hashes to {}",
                    rec.passage.content_hash, actual
                )));
            }
            if rec.passage.sentences.iter().any(|s| s.start > s.end || s.end > rec.passage.text.len()) {
                return Err(StoreError::Corrupt(format!(
                    "passage {} has out-of-bounds sentence spans",
                    rec.passage.content_hash
                )));
            }
            map.insert(rec.passage.content_hash, rec);
        }
        Ok(Self { records: map })
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let json = serde_json::to_vec(&self.records())
            .map_err(|e| StoreError::Corrupt(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        let records: Vec<StoredPassage> =
            serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        Self::from_records(records)
    }
}
