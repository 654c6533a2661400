//! Wikidata facts: statement extraction over SPARQL, textualization into
//! `Item: Property: value (qualifiers)` lines, and QID+PID keyed storage.

mod render;
mod sparql;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{hash_bytes, ContentHash};

pub use render::{format_time_value, media_url, textualize, TimePrecision};
pub use sparql::{
    fetch_statements, parse_statement_results, render_label_sparql, render_sparql, FetchOutcome,
    SparqlClient, SparqlResults,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WikidataError {
    #[error("invalid entity id {0:?} (expected Q followed by digits)")]
    InvalidQid(String),
    #[error("invalid property id {0:?} (expected P followed by digits)")]
    InvalidPid(String),
    #[error("invalid language code {0:?}")]
    InvalidLanguage(String),
    #[error("sparql transport: {0}")]
    Transport(String),
    #[error("invalid sparql response: {0}")]
    InvalidResponse(String),
}

fn is_id(s: &str, prefix: char) -> bool {
    let mut chars = s.chars();
    chars.next() == Some(prefix) && s.len() > 1 && chars.all(|c| c.is_ascii_digit())
}

/// A Wikidata item id such as `Q668`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(s: impl Into<String>) -> Result<Self, WikidataError> {
        let s = s.into();
        if is_id(&s, 'Q') {
            Ok(Self(s))
        } else {
            Err(WikidataError::InvalidQid(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// A Wikidata property id such as `P571`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PropertyId(String);

impl PropertyId {
    pub fn new(s: impl Into<String>) -> Result<Self, WikidataError> {
        let s = s.into();
        if is_id(&s, 'P') {
            Ok(Self(s))
        } else {
            Err(WikidataError::InvalidPid(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

macro_rules! id_conversions {
    ($t:ty) => {
        impl TryFrom<String> for $t {
            type Error = WikidataError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                Self::new(s)
            }
        }
        impl From<$t> for String {
            fn from(id: $t) -> String {
                id.0
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}
id_conversions!(EntityId);
id_conversions!(PropertyId);

/// Well-known qualifier properties with special rendering.
pub const START_TIME: &str = "P580";
pub const END_TIME: &str = "P582";
pub const POINT_IN_TIME: &str = "P585";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rank {
    Preferred,
    Normal,
    Deprecated,
}

impl Rank {
    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "Preferred" => Some(Rank::Preferred),
            "Normal" => Some(Rank::Normal),
            "Deprecated" => Some(Rank::Deprecated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Value {
    Entity { id: String },
    Time { timestamp: String, precision: u8 },
    Quantity { amount: String },
    Text { text: String },
    /// A Commons file, by file name.
    Media { file_name: String },
    Coordinate { wkt: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qualifier {
    pub pid: PropertyId,
    pub label: String,
    pub value: Value,
    pub value_label: String,
}

/// One statement `(property, value, qualifiers)` about an item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementRecord {
    pub qid: EntityId,
    pub item_label: String,
    pub pid: PropertyId,
    pub property_label: String,
    pub value: Value,
    pub value_label: String,
    pub qualifiers: Vec<Qualifier>,
    pub unit_label: Option<String>,
    pub rank: Rank,
    /// Image (P18) of the value entity, carried as metadata only.
    pub image: Option<String>,
}

/// A rendered statement line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextTriple {
    pub qid: EntityId,
    pub pid: PropertyId,
    pub text: String,
    pub triple_key: ContentHash,
    pub rank: Rank,
    pub media_url: Option<String>,
    pub image: Option<String>,
}

impl TextTriple {
    /// Splits the line on its first two `": "` separators into
    /// (item label, property label, value remainder).
    pub fn parts(&self) -> Option<(&str, &str, &str)> {
        let (item, rest) = self.text.split_once(": ")?;
        let (prop, value) = rest.split_once(": ")?;
        Some((item, prop, value))
    }
}

/// SHA-256 over `"{qid}|{pid}"`.
pub fn triple_key(qid: &EntityId, pid: &PropertyId) -> ContentHash {
    hash_bytes(format!("{}|{}", qid.as_str(), pid.as_str()).as_bytes())
}

/// All rendered values of one property of one item; the retrieval unit for
/// Wikidata content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleGroup {
    pub qid: EntityId,
    pub pid: PropertyId,
    pub triple_key: ContentHash,
    pub triples: Vec<TextTriple>,
}

impl TripleGroup {
    /// The group's lines joined with newlines, preferred-rank values first.
    pub fn text(&self) -> String {
        self.triples.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n")
    }

    pub fn media_url(&self) -> Option<&str> {
        self.triples.iter().find_map(|t| t.media_url.as_deref())
    }

    /// Identity of the rendered content, used to detect changed groups.
    pub fn fingerprint(&self) -> ContentHash {
        let mut bytes = self.triple_key.as_bytes().to_vec();
        bytes.extend_from_slice(self.text().as_bytes());
        hash_bytes(&bytes)
    }
}

/// Textualizes `records` and groups them by (qid, pid), in first-seen
/// order. Returns the groups and the number of deprecated records skipped.
pub fn group_triples(records: &[StatementRecord]) -> (Vec<TripleGroup>, usize) {
    let mut groups: Vec<TripleGroup> = Vec::new();
    let mut skipped = 0;
    for record in records {
        let Some(triple) = textualize(record) else {
            skipped += 1;
            continue;
        };
        match groups.iter_mut().find(|g| g.triple_key == triple.triple_key) {
            Some(g) => {
                if !g.triples.iter().any(|t| t.text == triple.text) {
                    g.triples.push(triple);
                }
            }
            None => groups.push(TripleGroup {
                qid: triple.qid.clone(),
                pid: triple.pid.clone(),
                triple_key: triple.triple_key,
                triples: vec![triple],
            }),
        }
    }
    for g in &mut groups {
        g.triples.sort_by_key(|t| t.rank);
    }
    (groups, skipped)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    groups: BTreeMap<ContentHash, TripleGroup>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Inserts or replaces the group for its key. Returns `true` if the key
    /// was new.
    pub fn put(&mut self, group: TripleGroup) -> bool {
        self.groups.insert(group.triple_key, group).is_none()
    }

    pub fn get(&self, key: &ContentHash) -> Option<&TripleGroup> {
        self.groups.get(key)
    }

    pub fn contains(&self, key: &ContentHash) -> bool {
        self.groups.contains_key(key)
    }

    pub fn remove(&mut self, key: &ContentHash) -> Option<TripleGroup> {
        self.groups.remove(key)
    }

    pub fn groups_for_entity(&self, qid: &EntityId) -> Vec<&TripleGroup> {
        self.groups.values().filter(|g| &g.qid == qid).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TripleGroup> {
        self.groups.values()
    }

    pub fn from_groups(groups: Vec<TripleGroup>) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for g in groups {
            let key = triple_key(&g.qid, &g.pid);
            if key != g.triple_key {
                return Err(format!("group {}|{} has a mismatched key", g.qid, g.pid));
            }
            map.insert(key, g);
        }
        Ok(Self { groups: map })
    }
}
