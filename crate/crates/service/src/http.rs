//! JSON-over-HTTP routes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use q2q_core::retrieval::RetrievalResult;
use q2q_core::SourceKind;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{Engine, EngineError};

const MAX_INGEST_BYTES: usize = 64 * 1024 * 1024;

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/query", get(query))
        .route("/status", get(status))
        .route("/ingest/articles", post(ingest_articles))
        .route("/ingest/wikidata/{qid}", post(ingest_wikidata))
        .layer(DefaultBodyLimit::max(MAX_INGEST_BYTES))
        .with_state(engine)
}

pub struct ApiError(EngineError);

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            EngineError::BadRequest(_) => StatusCode::BAD_REQUEST,
            EngineError::Malformed(_) => StatusCode::UNPROCESSABLE_ENTITY,
            EngineError::NotLoaded | EngineError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            EngineError::Embedding(_) | EngineError::Upstream(_) => StatusCode::BAD_GATEWAY,
            EngineError::Config(_) | EngineError::Knowledge(_) | EngineError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        } else if status.is_server_error() {
            log::warn!("{}", self.0);
        }
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, EngineError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| EngineError::Internal(e.to_string()))?
        .map_err(ApiError)
}

#[derive(Debug, Deserialize)]
pub struct QueryParams {
    q: Option<String>,
    k: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ArticleRef {
    pub id: String,
    pub title: String,
    pub section: String,
    pub paragraph_index: usize,
}

#[derive(Debug, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Serialize)]
pub struct ResultBody {
    pub matched_question: String,
    pub score: f64,
    pub source_kind: SourceKind,
    pub content_hash: String,
    pub article: Option<ArticleRef>,
    pub text: String,
    /// Byte offsets into `text`.
    pub sentence: Option<Span>,
    pub media_url: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct QueryResponse {
    pub query: String,
    pub results: Vec<ResultBody>,
}

fn round4(x: f32) -> f64 {
    (f64::from(x) * 10_000.0).round() / 10_000.0
}

impl From<RetrievalResult> for ResultBody {
    fn from(r: RetrievalResult) -> Self {
        Self {
            matched_question: r.matched_question,
            score: round4(r.score),
            source_kind: r.source_kind,
            content_hash: r.content_hash.to_hex(),
            article: r.article.map(|l| ArticleRef {
                id: l.article_id,
                title: l.article_title,
                section: l.section_title,
                paragraph_index: l.paragraph_index,
            }),
            text: r.text,
            sentence: r.sentence_span.map(|s| Span { start: s.start, end: s.end }),
            media_url: r.media_url,
        }
    }
}

async fn query(State(engine): State<Arc<Engine>>, Query(params): Query<QueryParams>) -> Result<Json<QueryResponse>, ApiError> {
    let q = params.q.unwrap_or_default();
    if q.trim().is_empty() {
        return Err(EngineError::BadRequest("parameter q must not be empty".into()).into());
    }
    let k = match params.k.as_deref().map(str::trim).filter(|k| !k.is_empty()) {
        Some(k) => Some(k.parse::<usize>().map_err(|_| EngineError::BadRequest(format!("k must be a positive integer, got {k:?}")))?),
        None => None,
    };
    let text = q.clone();
    let results = blocking(move || engine.query(&text, k)).await?;
    Ok(Json(QueryResponse {
        query: q,
        results: results.into_iter().map(ResultBody::from).collect(),
    }))
}

async fn status(State(engine): State<Arc<Engine>>) -> impl IntoResponse {
    Json(engine.status())
}

async fn ingest_articles(State(engine): State<Arc<Engine>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| EngineError::Malformed("body is not UTF-8".into()))?;
    let report = blocking(move || engine.ingest_jsonl(&text, false)).await?;
    Ok(Json(report))
}

async fn ingest_wikidata(State(engine): State<Arc<Engine>>, Path(qid): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let report = blocking(move || engine.ingest_wikidata(&qid)).await?;
    Ok(Json(report))
}

/// Serves `router` on `listen` until the process receives Ctrl-C.
pub async fn serve(engine: Arc<Engine>, listen: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
