//! Statement listing over the SPARQL protocol and folding of result rows
//! into statement records.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use percent_encoding::percent_decode_str;
use serde::Deserialize;

use super::render::TimePrecision;
use super::{EntityId, PropertyId, Qualifier, Rank, StatementRecord, Value, WikidataError};

const QUERY_TEMPLATE: &str = include_str!("qitem.sparql");
const LABEL_TEMPLATE: &str = include_str!("item_label.sparql");

const ENTITY_PREFIX: &str = "http://www.wikidata.org/entity/";
const FILE_PATH_PREFIX: &str = "http://commons.wikimedia.org/wiki/Special:FilePath/";
const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
const WKT: &str = "http://www.opengis.net/ont/geosparql#wktLiteral";
/// Unit of dimensionless quantities.
const UNIT_ONE: &str = "http://www.wikidata.org/entity/Q199";

fn check_language(language: &str) -> Result<(), WikidataError> {
    let ok = !language.is_empty()
        && language.len() <= 16
        && language.chars().all(|c| c.is_ascii_lowercase() || c == '-')
        && !language.starts_with('-');
    if ok {
        Ok(())
    } else {
        Err(WikidataError::InvalidLanguage(language.to_string()))
    }
}

fn substitute(template: &str, qid: &str, language: &str) -> Result<String, WikidataError> {
    let qid = EntityId::new(qid)?;
    check_language(language)?;
    Ok(template.replace("${qid}", qid.as_str()).replace("${language}", language))
}

/// The full statement listing query for one item.
pub fn render_sparql(qid: &str, language: &str) -> Result<String, WikidataError> {
    substitute(QUERY_TEMPLATE, qid, language)
}

/// A companion query for the item's own label, which the listing omits.
pub fn render_label_sparql(qid: &str, language: &str) -> Result<String, WikidataError> {
    substitute(LABEL_TEMPLATE, qid, language)
}

/// SPARQL 1.1 JSON results.
#[derive(Debug, Clone, Deserialize)]
pub struct SparqlResults {
    pub results: ResultBindings,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ResultBindings {
    pub bindings: Vec<HashMap<String, Term>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Term {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: String,
    #[serde(default)]
    pub datatype: Option<String>,
}

impl SparqlResults {
    pub fn from_json(json: &str) -> Result<Self, WikidataError> {
        serde_json::from_str(json).map_err(|e| WikidataError::InvalidResponse(e.to_string()))
    }
}

fn entity_suffix(uri: &str) -> Option<&str> {
    uri.strip_prefix(ENTITY_PREFIX)
}

fn infer_precision(timestamp: &str) -> u8 {
    // The listing returns bare dateTimes; year-precision values come back as
    // January 1st.
    let date = timestamp.trim_start_matches(['+', '-']).split('T').next().unwrap_or("");
    if date.ends_with("-01-01") || date.ends_with("-00-00") {
        TimePrecision::YEAR
    } else {
        TimePrecision::DAY
    }
}

fn term_value(term: &Term) -> Option<Value> {
    match term.kind.as_str() {
        "uri" => {
            if let Some(name) = term.value.strip_prefix(FILE_PATH_PREFIX) {
                let file_name = percent_decode_str(name).decode_utf8().ok()?.into_owned();
                return Some(Value::Media { file_name });
            }
            if let Some(id) = entity_suffix(&term.value) {
                return EntityId::new(id).ok().map(|_| Value::Entity { id: id.to_string() });
            }
            if term.value.contains("/.well-known/genid/") {
                return None;
            }
            Some(Value::Text {
                text: term.value.clone(),
            })
        }
        "literal" | "typed-literal" => {
            let datatype = term.datatype.as_deref().unwrap_or("");
            let value = term.value.clone();
            Some(match datatype.strip_prefix(XSD) {
                Some("dateTime") => Value::Time {
                    precision: infer_precision(&value),
                    timestamp: value,
                },
                Some("decimal" | "integer" | "double" | "float") => Value::Quantity { amount: value },
                _ if datatype == WKT => Value::Coordinate { wkt: value },
                _ => Value::Text { text: value },
            })
        }
        _ => None,
    }
}

/// Records folded from one listing query, with row accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchOutcome {
    pub records: Vec<StatementRecord>,
    pub rows: usize,
    pub skipped_rows: usize,
}

/// Groups listing rows by (property, statement value), folding qualifier
/// and unit rows into the owning statement.
pub fn parse_statement_results(qid: &EntityId, item_label: &str, results: &SparqlResults) -> FetchOutcome {
    let mut out = FetchOutcome {
        rows: results.results.bindings.len(),
        ..FetchOutcome::default()
    };
    let mut slots: HashMap<(String, String), usize> = HashMap::new();
    for row in &results.results.bindings {
        let get = |k: &str| row.get(k);
        let label = |k: &str| row.get(k).map(|t| t.value.clone()).unwrap_or_default();

        let parsed = (|| {
            let pid = PropertyId::new(entity_suffix(&get("property")?.value)?).ok()?;
            let value_term = get("statementValue")?;
            let value = term_value(value_term)?;
            let rank = Rank::from_label(&get("statementRankLabel")?.value)?;
            Some((pid, value_term.value.clone(), value, rank))
        })();
        let Some((pid, raw_value, value, rank)) = parsed else {
            log::warn!("skipping unparseable sparql row for {qid}");
            out.skipped_rows += 1;
            continue;
        };

        let key = (pid.as_str().to_string(), raw_value);
        let idx = *slots.entry(key).or_insert_with(|| {
            let value_label = match &value {
                Value::Entity { .. } => label("statementValueLabel"),
                _ => String::new(),
            };
            out.records.push(StatementRecord {
                qid: qid.clone(),
                item_label: item_label.to_string(),
                pid: pid.clone(),
                property_label: label("propertyLabel"),
                value: value.clone(),
                value_label,
                qualifiers: Vec::new(),
                unit_label: None,
                rank,
                image: get("statementValueImage").map(|t| t.value.clone()),
            });
            out.records.len() - 1
        });
        let record = &mut out.records[idx];

        if let Some(qp) = get("qualifierProperty") {
            let qualifier = entity_suffix(&qp.value)
                .and_then(|s| PropertyId::new(s).ok())
                .zip(get("qualifierValue").and_then(term_value));
            match qualifier {
                Some((qpid, qvalue)) => {
                    let dup = record.qualifiers.iter().any(|q| q.pid == qpid && q.value == qvalue);
                    if !dup {
                        let value_label = match &qvalue {
                            Value::Entity { .. } => label("qualifierValueLabel"),
                            _ => String::new(),
                        };
                        record.qualifiers.push(Qualifier {
                            pid: qpid,
                            label: label("qualifierPropertyLabel"),
                            value: qvalue,
                            value_label,
                        });
                    }
                }
                None => log::warn!("dropping unparseable qualifier on {qid} {}", record.pid),
            }
        }
        if record.unit_label.is_none() && matches!(record.value, Value::Quantity { .. }) {
            if let Some(unit) = get("unitOfMeasure").filter(|u| u.value != UNIT_ONE) {
                let name = row
                    .get("unitOfMeasureLabel")
                    .map_or_else(|| unit.value.clone(), |l| l.value.clone());
                record.unit_label = Some(name);
            }
        }
        if record.image.is_none() {
            record.image = get("statementValueImage").map(|t| t.value.clone());
        }
    }
    out
}

/// A SPARQL endpoint client with a minimum interval between requests.
pub struct SparqlClient {
    agent: ureq::Agent,
    endpoint: String,
    min_interval: Duration,
    last_request: Mutex<Option<Instant>>,
}

impl SparqlClient {
    /// `requests_per_second <= 0` disables rate limiting.
    pub fn new(endpoint: impl Into<String>, requests_per_second: f64) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .user_agent("q2q/0.1 (question-to-question retrieval)")
            .build()
            .into();
        let min_interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        Self {
            agent,
            endpoint: endpoint.into(),
            min_interval,
            last_request: Mutex::new(None),
        }
    }

    fn throttle(&self) {
        let mut last = self.last_request.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    pub fn query(&self, sparql: &str) -> Result<SparqlResults, WikidataError> {
        self.throttle();
        let body = self
            .agent
            .get(&self.endpoint)
            .query("query", sparql)
            .query("format", "json")
            .header("Accept", "application/sparql-results+json")
            .call()
            .map_err(|e| WikidataError::Transport(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| WikidataError::Transport(e.to_string()))?;
        SparqlResults::from_json(&body)
    }
}

/// Runs the label and listing queries for `qid` and folds the rows.
pub fn fetch_statements(client: &SparqlClient, qid: &str, language: &str) -> Result<FetchOutcome, WikidataError> {
    let id = EntityId::new(qid)?;
    let labels = client.query(&render_label_sparql(qid, language)?)?;
    let item_label = labels
        .results
        .bindings
        .first()
        .and_then(|row| row.get("itemLabel"))
        .map_or_else(|| qid.to_string(), |t| t.value.clone());
    let rows = client.query(&render_sparql(qid, language)?)?;
    Ok(parse_statement_results(&id, &item_label, &rows))
}
