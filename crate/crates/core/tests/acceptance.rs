//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails. Criteria that need a live embedding service run
//! only when `Q2Q_EMBEDDING_ENDPOINT` is set (dimension from
//! `Q2Q_EMBEDDING_DIM`, default 384).

mod support;

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use q2q_core::corpus::{parse_articles_jsonl, Article, Section};
use q2q_core::embed::{Embedder, EmbeddingVector, HashEmbedder, HttpEmbedder};
use q2q_core::index::{plan_reindex, IndexEntry, QuestionIndex, SourceKind};
use q2q_core::ingest::Ingestor;
use q2q_core::qgen::{parse_question_list, PromptTemplates, QuestionGenerator};
use q2q_core::retrieval::{ablation_report, Retriever};
use q2q_core::wikidata::{
    parse_statement_results, textualize, EntityId, PropertyId, Qualifier, Rank, SparqlResults, StatementRecord, Value,
};
use q2q_core::{content_hash, ContentHash, KnowledgeBase};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

const DIM: usize = 384;

const OBAMA_PASSAGE: &str = "Obama was born in Honolulu, Hawaii.
He graduated from Columbia University in 1983 with a Bachelor of Arts degree in political science and later worked as a community organizer in Chicago.
In 1988, Obama enrolled in Harvard Law School, where he was the first black president of the Harvard Law Review.
He became a civil rights attorney and an academic, teaching constitutional law at the University of Chicago Law School from 1992 to 2004.
In 1996, Obama was elected to represent the 13th district in the Illinois Senate, a position he held until 2004, when he successfully ran for the U.S. Senate.
In the 2008 presidential election, after a close primary campaign against Hillary Clinton, he was nominated by the Democratic Party for president.
Obama selected Joe Biden as his running mate and defeated Republican nominee John McCain.";

const EXAMPLE_QUESTIONS: [&str; 17] = [
    "Where was Barack Obama born?",
    "What state was Obama born in?",
    "Which university did Obama graduate from?",
    "What year did Obama graduate?",
    "What was Obama's major in college?",
    "What did Obama do after graduating from Columbia?",
    "Where did Obama work as a community organizer?",
    "When did Obama enroll in Harvard Law School?",
    "Who is the first black president of Harvard Law Review?",
    "From what years did Obama teach at University of Chicago Law School?",
    "When was Obama first elected to the Illinois Senate?",
    "When did Obama run for U.S. Senate?",
    "Who did Obama compete against in the Democratic primary?",
    "Who was Obama's running mate in the 2008 presidential election?",
    "Who did Obama defeat in the 2008 presidential election?",
    "Who defeated John McCain in the 2008 presidential election?",
    "What political party nominated Obama for president?",
];

const ABLATION_QUERIES: [&str; 13] = [
    "Where was Barack Obama born?",
    "Which university did Obama graduate from?",
    "What year did Obama graduate?",
    "Where did Obama work as a community organizer?",
    "Who is the first black president of Harvard Law Review?",
    "From what years did Obama teach at University of Chicago Law School?",
    "When was Obama first elected to the Illinois Senate?",
    "When did Obama run for U.S. Senate?",
    "Who was Obama's running mate in the 2008 presidential election?",
    "Who did Obama defeat in the 2008 presidential election?",
    "Who defeated John McCain in the 2008 presidential election?",
    "What political party nominated Obama for president?",
    "Obama birth place",
];

/// Generated questions seeded into the ranking index: the distinct
/// passage-side questions and the India fact questions.
const RANKING_SEED: [&str; 16] = [
    "Where was Obama born?",
    "What percentage of France's electricity is nuclear?",
    "How many people died in chernobyl disaster",
    "Who is the current mayor of paris?",
    "Which is the longest river in Africa?",
    "What is the total length of Nile river?",
    "When was India founded?",
    "When did India become independent?",
    "Who is the current prime minister of India?",
    "Who was the prime minister of India in 2020?",
    "What was the life expectancy in India in 1999?",
    "What is the average life span in India around the year 1999?",
    "Show me the flag of India.",
    "What does the flag of India look like?",
    "What is the capital of India?",
    "Where is the capital of India located?",
];

const RANKING_PAIRS: [(&str, &str); 18] = [
    ("Obama's birthplace?", "Where was Obama born?"),
    ("France nuclear energy percentage?", "What percentage of France's electricity is nuclear?"),
    ("How many people died in chernobyl accident", "How many people died in chernobyl disaster"),
    ("How many people died in chernobyl", "How many people died in chernobyl disaster"),
    ("Deaths chernobyl accident", "How many people died in chernobyl disaster"),
    ("Mayor of paris", "Who is the current mayor of paris?"),
    ("longest river in Africa", "Which is the longest river in Africa?"),
    ("length of Nile", "What is the total length of Nile river?"),
    ("When was India established?", "When was India founded?"),
    ("Who leads India now?", "Who is the current prime minister of India?"),
    ("What was life expectancy in India back then?", "What was the life expectancy in India in 1999?"),
    ("Show Indian flag", "Show me the flag of India."),
    ("India's capital city", "What is the capital of India?"),
    ("Tell me the time of Indian independence", "When did India become independent?"),
    ("Who is the PM of India now", "Who is the current prime minister of India?"),
    ("What is the flag of India like?", "What does the flag of India look like?"),
    ("Where is the capital of India located", "Where is the capital of India located?"),
    ("Average life span of India?", "What is the average life span in India around the year 1999?"),
];

fn templates() -> PromptTemplates {
    PromptTemplates::load(&support::prompts_dir()).unwrap()
}

fn hash_ingestor() -> Ingestor {
    let qg = QuestionGenerator::new(templates(), support::synthetic_llm());
    Ingestor::new(qg, Arc::new(HashEmbedder::new(DIM)), 4).unwrap()
}

fn live_embedder() -> Option<Result<HttpEmbedder, String>> {
    let url = std::env::var("Q2Q_EMBEDDING_ENDPOINT").ok().filter(|u| !u.is_empty())?;
    let dim = std::env::var("Q2Q_EMBEDDING_DIM").ok().and_then(|d| d.parse().ok()).unwrap_or(DIM);
    Some(HttpEmbedder::connect(&url, dim, 32).map_err(|e| format!("{url}: {e}")))
}

fn random_sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut s: Vec<String> = (0..words)
        .map(|_| {
            let len = rng.random_range(3..=9);
            (0..len).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect()
        })
        .collect();
    let first = &mut s[0];
    first.replace_range(0..1, &first[0..1].to_uppercase());
    format!("{}.", s.join(" "))
}

fn random_article(rng: &mut ChaCha8Rng, id: usize, paragraphs: usize) -> Article {
    let paras: Vec<String> = (0..paragraphs)
        .map(|_| {
            let n = rng.random_range(2..=4);
            (0..n)
                .map(|_| {
                    let words = rng.random_range(5..=10);
                    random_sentence(rng, words)
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Article {
        article_id: format!("synthetic-{id}"),
        title: format!("Synthetic {id}"),
        sections: vec![Section {
            title: "Body".into(),
            text: paras.join("\n\n"),
        }],
    }
}

fn self_retrieval() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut articles = parse_articles_jsonl(&support::fixture("articles.jsonl")).unwrap();
    articles.extend((0..25).map(|i| random_article(&mut rng, i, 3)));
    let mut kb = KnowledgeBase::new(DIM);
    hash_ingestor().ingest_articles(&mut kb, &articles, false).unwrap();
    let embedder = HashEmbedder::new(DIM);
    let retriever = Retriever::new(&kb, &embedder);
    let mut misses = 0;
    for entry in kb.index.entries() {
        let top = &retriever.answer(&entry.question_text, 1).unwrap()[0];
        let ok = top.matched_question == entry.question_text
            && top.content_hash == entry.content_hash
            && (top.score - 1.0).abs() <= 1e-6;
        misses += usize::from(!ok);
    }
    let n = kb.index.len();
    let elapsed = start.elapsed();
    check(
        n >= 200 && misses == 0 && elapsed < Duration::from_secs(10),
        format!("{} of {n} questions at rank 1 with score 1.0, {elapsed:.2?}", n - misses),
    )
}

fn random_unit(rng: &mut ChaCha8Rng) -> EmbeddingVector {
    EmbeddingVector::new((0..DIM).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Scores every entry with a scalar loop and orders by insertion.
fn oracle_top_k(entries: &[IndexEntry], query: &EmbeddingVector, k: usize) -> Vec<(String, ContentHash, u32)> {
    let mut ranked: Vec<(f32, &IndexEntry)> = Vec::new();
    for e in entries {
        let (q, v) = (query.values(), e.embedding.values());
        let mut s = 0f64;
        for i in 0..q.len() {
            s += f64::from(q[i]) * f64::from(v[i]);
        }
        let s = (s as f32).clamp(-1.0, 1.0);
        let before = |(t, o): &(f32, &IndexEntry)| {
            *t > s || (*t == s && (o.question_text.as_str(), o.content_hash) < (e.question_text.as_str(), e.content_hash))
        };
        let pos = ranked.iter().take_while(|x| before(x)).count();
        ranked.insert(pos, (s, e));
    }
    ranked
        .into_iter()
        .take(k)
        .map(|(s, e)| (e.question_text.clone(), e.content_hash, s.to_bits()))
        .collect()
}

fn search_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut index = QuestionIndex::new(DIM);
    let mut vectors: Vec<EmbeddingVector> = Vec::new();
    for i in 0..1000 {
        // every tenth vector repeats an earlier one so ties must be broken
        let v = if i % 10 == 9 { vectors[rng.random_range(0..vectors.len())].clone() } else { random_unit(&mut rng) };
        vectors.push(v.clone());
        index
            .insert(IndexEntry {
                question_text: format!("question {:03}?", rng.random_range(0..400)),
                embedding: v,
                content_hash: content_hash(&format!("unit {i}")),
                source_kind: if i % 3 == 0 { SourceKind::Triple } else { SourceKind::Passage },
            })
            .unwrap();
    }
    let mut mismatches = 0;
    let mut checks = 0;
    for qi in 0..60 {
        let query = if qi % 4 == 0 { vectors[rng.random_range(0..vectors.len())].clone() } else { random_unit(&mut rng) };
        for k in [1, 5, 20] {
            let got: Vec<_> = index
                .search_top_k(&query, k)
                .unwrap()
                .into_iter()
                .map(|h| (h.entry.question_text, h.entry.content_hash, h.score.to_bits()))
                .collect();
            checks += 1;
            mismatches += usize::from(got != oracle_top_k(index.entries(), &query, k));
        }
    }
    let elapsed = start.elapsed();
    check(
        index.len() == 1000 && mismatches == 0 && elapsed < Duration::from_secs(30),
        format!("{} of {checks} rankings identical to the scalar oracle (k in 1, 5, 20), {elapsed:.2?}", checks - mismatches),
    )
}

fn hash_conformance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,;:!?'\"()-éüß漢字Ω🙂\n\t"
        .chars()
        .collect();
    let mut inputs = vec![String::new(), "abc".to_string()];
    inputs.extend((0..100).map(|_| {
        let len = rng.random_range(0..200);
        (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect()
    }));
    let known = [
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
    ];
    let references_ok = known.iter().zip(&inputs).all(|(hex, s)| content_hash(s).to_hex() == *hex);
    let agree = inputs
        .iter()
        .filter(|s| content_hash(s).as_bytes() == &support::sha256_oracle(s.as_bytes()) && content_hash(s).as_bytes().len() == 32)
        .count();
    check(
        references_ok && agree == inputs.len(),
        format!("reference digests {}, {agree} of {} inputs match the independent oracle", if references_ok { "match" } else { "differ" }, inputs.len()),
    )
}

fn textualization_goldens() -> Outcome {
    let record = |qid: &str, item: &str, pid: &str, prop: &str, value: Value, label: &str| StatementRecord {
        qid: EntityId::new(qid).unwrap(),
        item_label: item.into(),
        pid: PropertyId::new(pid).unwrap(),
        property_label: prop.into(),
        value,
        value_label: label.into(),
        qualifiers: vec![],
        unit_label: None,
        rank: Rank::Normal,
        image: None,
    };
    let inception = record(
        "Q668",
        "India",
        "P571",
        "inception",
        Value::Time {
            timestamp: "+1947-08-15T00:00:00Z".into(),
            precision: 11,
        },
        "",
    );
    let mut pm = record("Q668", "India", "P6", "Prime Minister", Value::Entity { id: "Q1058".into() }, "Narendra Modi");
    pm.rank = Rank::Preferred;
    pm.qualifiers.push(Qualifier {
        pid: PropertyId::new("P580").unwrap(),
        label: "start time".into(),
        value: Value::Time {
            timestamp: "+2014-05-26T00:00:00Z".into(),
            precision: 11,
        },
        value_label: String::new(),
    });
    let model = record("Q243", "Eiffel Tower", "P4896", "3D Model", Value::Media { file_name: "[filename]".into() }, "");
    let expected = [
        "India: Inception: 15 August 1947",
        "India: Prime Minister: Narendra Modi (2014-current)",
        "Eiffel Tower: 3D Model: [filename]",
    ];
    let got: Vec<String> = [inception, pm, model].iter().map(|r| textualize(r).unwrap().text).collect();
    let exact = got.iter().zip(expected).filter(|(g, e)| g.as_str() == *e).count();
    check(exact == 3, format!("{exact} of 3 renderings byte-exact: {got:?}"))
}

fn prompt_parse_goldens() -> Outcome {
    let file = std::fs::read_to_string(support::prompts_dir().join("passage_questions.txt")).unwrap();
    let expected = file
        .replace("{{article_title}}", "Barack Obama")
        .replace("{{section_title}}", "Early Life and Education")
        .replace("{{passage}}", OBAMA_PASSAGE);
    let built = templates()
        .build_passage_prompt("Barack Obama", "Early Life and Education", OBAMA_PASSAGE)
        .unwrap();
    let parsed = parse_question_list(&support::worked_example_output()).unwrap();
    let in_order = parsed == EXAMPLE_QUESTIONS;
    check(
        built == expected && in_order,
        format!(
            "prompt {} the template file, parsed {} questions{}",
            if built == expected { "matches" } else { "differs from" },
            parsed.len(),
            if in_order { " in order" } else { " (order or text differs)" }
        ),
    )
}

fn reindex_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut article = random_article(&mut rng, 0, 10);
    let ingestor = hash_ingestor();
    let mut kb = KnowledgeBase::new(DIM);
    ingestor.ingest_articles(&mut kb, std::slice::from_ref(&article), false).unwrap();
    let old: BTreeSet<ContentHash> = kb.passages.hashes_for_article(&article.article_id).into_iter().collect();

    let mut paras: Vec<String> = article.sections[0].text.split("\n\n").map(str::to_string).collect();
    let replaced = content_hash(&paras[4]);
    paras[4] = random_sentence(&mut rng, 8);
    article.sections[0].text = paras.join("\n\n");
    let new: BTreeSet<ContentHash> = q2q_core::corpus::split_paragraphs(&article).iter().map(|p| p.content_hash).collect();
    let plan = plan_reindex(&old, &new);

    let unchanged: Vec<IndexEntry> = kb.index.entries().iter().filter(|e| e.content_hash != replaced).cloned().collect();
    let report = ingestor.ingest_articles(&mut kb, std::slice::from_ref(&article), false).unwrap();
    let embedder = HashEmbedder::new(DIM);
    let retriever = Retriever::new(&kb, &embedder);
    let self_ok = unchanged.iter().all(|e| {
        let top = &retriever.answer(&e.question_text, 1).unwrap()[0];
        top.matched_question == e.question_text && top.content_hash == e.content_hash && (top.score - 1.0).abs() <= 1e-6
    });
    let stale = kb.index.entries().iter().filter(|e| e.content_hash == replaced).count();
    check(
        old.len() == 10 && plan.to_delete.len() == 1 && plan.to_add.len() == 1 && report.units_added == 1 && report.units_removed == 1 && stale == 0 && self_ok,
        format!(
            "plan deletes {} and adds {}; {} unchanged questions {} self-retrieve; {stale} stale entries",
            plan.to_delete.len(),
            plan.to_add.len(),
            unchanged.len(),
            if self_ok { "all" } else { "do not all" }
        ),
    )
}

fn no_fabrication() -> Outcome {
    let ingestor = hash_ingestor();
    let mut kb = KnowledgeBase::new(DIM);
    let articles = parse_articles_jsonl(&support::fixture("articles.jsonl")).unwrap();
    ingestor.ingest_articles(&mut kb, &articles, false).unwrap();
    let rows = SparqlResults::from_json(&support::fixture("q668_statements.json")).unwrap();
    let qid = EntityId::new("Q668").unwrap();
    ingestor.ingest_entity(&mut kb, &qid, &parse_statement_results(&qid, "India", &rows)).unwrap();

    let stored: HashSet<String> = kb
        .passages
        .iter()
        .map(|p| p.passage.text.clone())
        .chain(kb.triples.iter().map(|g| g.text()))
        .collect();
    let vocabulary: Vec<String> = stored.iter().flat_map(|t| t.split_whitespace().map(str::to_string).collect::<Vec<_>>()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let embedder = HashEmbedder::new(DIM);
    let retriever = Retriever::new(&kb, &embedder);
    let (mut returned, mut fabricated) = (0, 0);
    for i in 0..1000 {
        let n = rng.random_range(1..=6);
        let query: String = (0..n)
            .map(|_| {
                if i % 5 == 0 {
                    random_sentence(&mut rng, 1)
                } else {
                    vocabulary.choose(&mut rng).unwrap().clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ");
        for r in retriever.answer(&query, rng.random_range(1..=5)).unwrap() {
            returned += 1;
            fabricated += usize::from(!stored.contains(&r.text));
        }
    }
    check(fabricated == 0, format!("{} of {returned} returned texts byte-identical to stored content over 1000 queries", returned - fabricated))
}

fn directional_ablation() -> Outcome {
    let Some(embedder) = live_embedder() else {
        let hash = HashEmbedder::new(DIM);
        let r = ablation_report(&hash, &strings(&ABLATION_QUERIES), OBAMA_PASSAGE, &strings(&EXAMPLE_QUESTIONS)).unwrap();
        return Skip(format!(
            "Q2Q_EMBEDDING_ENDPOINT not set (offline hash embedder for reference: q2q {:.3}, q2p {:.3})",
            r.mean_q2q(),
            r.mean_q2p()
        ));
    };
    let embedder = match embedder {
        Ok(e) => e,
        Err(e) => return Fail(format!("embedding endpoint unusable: {e}")),
    };
    let start = Instant::now();
    match ablation_report(&embedder, &strings(&ABLATION_QUERIES), OBAMA_PASSAGE, &strings(&EXAMPLE_QUESTIONS)) {
        Ok(r) => {
            let (q2q, q2p) = (r.mean_q2q(), r.mean_q2p());
            let elapsed = start.elapsed();
            check(
                q2q > q2p && q2q >= 0.85 && elapsed < Duration::from_secs(120),
                format!("mean q2q {q2q:.3} vs mean q2p {q2p:.3} over {} queries, {elapsed:.2?}", r.rows.len()),
            )
        }
        Err(e) => Fail(format!("ablation failed: {e}")),
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn ranking_hits(embedder: &dyn Embedder) -> Result<(usize, Vec<String>), String> {
    let mut index = QuestionIndex::new(embedder.dim());
    let vectors = embedder.embed_batch(&RANKING_SEED).map_err(|e| e.to_string())?;
    for (q, v) in RANKING_SEED.iter().zip(vectors) {
        index
            .insert(IndexEntry {
                question_text: q.to_string(),
                embedding: v,
                content_hash: content_hash(q),
                source_kind: SourceKind::Passage,
            })
            .map_err(|e| e.to_string())?;
    }
    let mut hits = 0;
    let mut misses = Vec::new();
    for (query, expected) in RANKING_PAIRS {
        let qv = embedder.embed_batch(&[query]).map_err(|e| e.to_string())?.remove(0);
        let top = index.search_top_k(&qv, 1).map_err(|e| e.to_string())?.remove(0);
        if top.entry.question_text == expected {
            hits += 1;
        } else {
            misses.push(format!("{query:?} -> {:?}", top.entry.question_text));
        }
    }
    Ok((hits, misses))
}

/// Runs against the live service when configured, otherwise against the
/// deterministic hash embedder; the output names the backend used.
fn ranking_reproduction() -> Outcome {
    let (backend, result) = match live_embedder() {
        Some(Ok(e)) => ("live endpoint", ranking_hits(&e)),
        Some(Err(e)) => return Fail(format!("embedding endpoint unusable: {e}")),
        None => ("offline hash embedder", ranking_hits(&HashEmbedder::new(DIM))),
    };
    match result {
        Ok((hits, misses)) => check(
            hits >= 16,
            format!("{hits}/18 queries retrieve their designated question ({backend}); misses: {misses:?}"),
        ),
        Err(e) => Fail(e),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("self-retrieval exactness", self_retrieval),
        ("search oracle equivalence", search_oracle),
        ("hash conformance", hash_conformance),
        ("textualization goldens", textualization_goldens),
        ("prompt/parse goldens", prompt_parse_goldens),
        ("reindex correctness", reindex_correctness),
        ("no-fabrication property", no_fabrication),
        ("directional ablation [live]", directional_ablation),
        ("ranking reproduction", ranking_reproduction),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let (tag, detail) = match run() {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
