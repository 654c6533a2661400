#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use q2q_core::embed::{EmbedError, Embedder, EmbeddingVector, HashEmbedder};
use q2q_core::knowledge::KnowledgeBase;
use q2q_core::qgen::{GenerationRequest, Generator};
use q2q_service::config::ServiceConfig;
use q2q_service::engine::Engine;
use tower::ServiceExt;

pub const DIM: usize = 384;

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

pub fn prompts_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../prompts")
}

pub fn config() -> ServiceConfig {
    ServiceConfig {
        prompts_dir: prompts_dir(),
        sparql_requests_per_second: 0.0,
        ..ServiceConfig::default()
    }
}

/// The bullet block under "Expected Output:" in the stored passage prompt.
pub fn worked_example_output() -> String {
    let template = std::fs::read_to_string(prompts_dir().join("passage_questions.txt")).unwrap();
    let start = template.find("Expected Output:").unwrap() + "Expected Output:".len();
    let end = start + template[start..].find("Input:").unwrap();
    template[start..end].trim().to_string()
}

/// Stand-in for the generation endpoint. The Obama passage gets the worked
/// example's questions, triple prompts get one question per line, and any
/// other passage gets a single question.
pub fn stub_llm() -> Arc<dyn Generator> {
    Arc::new(|req: &GenerationRequest| {
        let p = &req.prompt;
        if let Some(at) = p.rfind("Section Title: ") {
            let body = &p[at..];
            if body.contains("\n\nObama was born in Honolulu") {
                return Ok(worked_example_output());
            }
            return Ok("- What does this paragraph describe?".into());
        }
        let at = p.rfind("Input: \"").unwrap() + "Input: \"".len();
        let end = p.rfind("\"\nOutput").unwrap();
        let mut out = String::new();
        for line in p[at..end].lines() {
            if line.starts_with("India: Capital:") {
                out.push_str("- What is the capital of India?\n");
            } else {
                out.push_str(&format!("- What is {line}?\n"));
            }
        }
        Ok(out)
    })
}

pub struct FailingEmbedder(pub usize);

impl Embedder for FailingEmbedder {
    fn dim(&self) -> usize {
        self.0
    }

    fn embed_batch(&self, _texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Err(EmbedError::Transport("connection refused".into()))
    }
}

pub fn engine() -> Arc<Engine> {
    let cfg = config();
    Arc::new(Engine::with_parts(cfg, KnowledgeBase::new(DIM), Arc::new(HashEmbedder::new(DIM)), Some(stub_llm())).unwrap())
}

pub fn engine_with(config: ServiceConfig) -> Arc<Engine> {
    Arc::new(Engine::with_parts(config, KnowledgeBase::new(DIM), Arc::new(HashEmbedder::new(DIM)), Some(stub_llm())).unwrap())
}

pub async fn call(engine: &Arc<Engine>, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let request = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let response = q2q_service::http::router(engine.clone()).oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn call_json(engine: &Arc<Engine>, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, serde_json::Value) {
    let (status, bytes) = call(engine, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

/// Minimal HTTP/1.1 server answering each connection with one response.
pub struct StubServer {
    pub base_url: String,
}

type Handler = dyn Fn(&str, &[u8]) -> (u16, String) + Send + Sync;

impl StubServer {
    /// `handler` receives the request target (path and query string) and body.
    pub fn start(handler: impl Fn(&str, &[u8]) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let handler: Arc<Handler> = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let handler = handler.clone();
                thread::spawn(move || {
                    let _ = serve(stream, &*handler);
                });
            }
        });
        Self { base_url }
    }
}

fn serve(stream: TcpStream, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let target = line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut len = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    let (status, payload) = handler(&target, &body);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}

/// Serves the recorded Q668 statement and label responses.
pub fn sparql_stub() -> StubServer {
    StubServer::start(|target, _| {
        // Only the statement query selects property labels.
        if target.contains("propertyLabel") {
            (200, fixture("q668_statements.json"))
        } else {
            (200, fixture("q668_label.json"))
        }
    })
}

/// An HTTP text-generation endpoint backed by [`stub_llm`].
pub fn generation_stub() -> StubServer {
    let llm = stub_llm();
    StubServer::start(move |_, body| {
        let req: serde_json::Value = serde_json::from_slice(body).unwrap();
        let request = GenerationRequest {
            prompt: req["prompt"].as_str().unwrap().to_string(),
            max_questions: 0,
            model_hint: String::new(),
        };
        match llm.generate(&request) {
            Ok(text) => (200, serde_json::json!({ "text": text }).to_string()),
            Err(e) => (500, serde_json::json!({ "error": e }).to_string()),
        }
    })
}
