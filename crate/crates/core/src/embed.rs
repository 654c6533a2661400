//! Text embedding backends and cosine similarity.
//!
//! Every vector handed out by this module is unit-normalized, so the index
//! can rank by plain dot products.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The embedding dimension of the default live backend (bge-small-en-v1.5).
pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector has zero norm or non-finite components")]
    Degenerate,
    #[error("embedding transport: {0}")]
    Transport(String),
    #[error("invalid embedding response: {0}")]
    InvalidResponse(String),
}

/// A unit-length `f32` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm.
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Degenerate);
        }
        let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::Degenerate);
        }
        let values = values.into_iter().map(|v| (f64::from(v) / norm) as f32).collect();
        Ok(Self { values })
    }

    /// Wraps values already known to be normalized (e.g. read back from an
    /// index file) without touching their bits.
    pub(crate) fn from_stored(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    /// Dot product, which is the cosine similarity for unit vectors.
    /// Accumulates in f64: an f32 running sum drifts by about 1e-6 over a
    /// few hundred dimensions.
    pub fn dot(&self, other: &Self) -> f32 {
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        sum as f32
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f32, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    let denom = a.norm() * b.norm();
    Ok((dot / denom).clamp(-1.0, 1.0) as f32)
}

/// An embedding function `Text -> R^d`.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

/// Embeds one text, checking the result against the backend's dimension.
pub fn embed_text(text: &str, backend: &dyn Embedder) -> Result<EmbeddingVector, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let mut out = backend.embed_batch(&[text])?;
    let v = out
        .pop()
        .ok_or_else(|| EmbedError::InvalidResponse("no vector returned".into()))?;
    if v.dim() != backend.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: backend.dim(),
            actual: v.dim(),
        });
    }
    Ok(v)
}

const HASH_SEED: u64 = 0x5132_5158_2024_0001;
const NGRAM_WEIGHT: f32 = 0.25;

/// Offline deterministic embedder: signed feature hashing of lowercase word
/// tokens, smoothed with character trigrams.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    /// # Panics
    /// If `dim < 8`.
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 8, "hash embedder needs dim >= 8, got {dim}");
        Self { dim }
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        test_embed(text, self.dim)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                if t.trim().is_empty() {
                    Err(EmbedError::EmptyText)
                } else {
                    Ok(self.embed(t))
                }
            })
            .collect()
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer spreads the low bits used for bucketing
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn accumulate(acc: &mut [f32], feature: &[u8], weight: f32) {
    let h = fnv1a(HASH_SEED, feature);
    let bucket = (h % acc.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    acc[bucket] += sign * weight;
}

/// The [`HashEmbedder`] function. Deterministic on every platform.
///
/// # Panics
/// If `dim < 8`.
pub fn test_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 8, "hash embedder needs dim >= 8, got {dim}");
    let lower = text.to_lowercase();
    let mut acc = vec![0f32; dim];
    let mut any = false;
    for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        any = true;
        let mut tagged = Vec::with_capacity(token.len() + 3);
        tagged.push(b'w');
        tagged.extend_from_slice(token.as_bytes());
        accumulate(&mut acc, &tagged, 1.0);

        let padded: Vec<char> = std::iter::once('#')
            .chain(token.chars())
            .chain(std::iter::once('#'))
            .collect();
        for tri in padded.windows(3) {
            let mut gram = String::from("g");
            gram.extend(tri);
            accumulate(&mut acc, gram.as_bytes(), NGRAM_WEIGHT);
        }
    }
    if !any {
        accumulate(&mut acc, lower.trim().as_bytes(), 1.0);
    }
    if acc.iter().all(|&v| v == 0.0) {
        acc[0] = 1.0;
    }
    EmbeddingVector::new(acc).expect("hash features are finite and non-zero")
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

#[derive(Deserialize)]
struct InfoResponse {
    dim: usize,
}

/// Client for a remote embedding service.
///
/// `POST {base}/embed` with `{"texts": [...]}` returns `{"vectors": [[...]]}`;
/// `GET {base}/info` reports `{"dim": n}`.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    base_url: String,
    dim: usize,
    batch_size: usize,
}

impl HttpEmbedder {
    /// Connects and checks the server-reported dimension against `dim`.
    pub fn connect(base_url: &str, dim: usize, batch_size: usize) -> Result<Self, EmbedError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        let base_url = base_url.trim_end_matches('/').to_string();
        let info: InfoResponse = agent
            .get(&format!("{base_url}/info"))
            .call()
            .map_err(|e| EmbedError::Transport(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::InvalidResponse(e.to_string()))?;
        if info.dim != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                actual: info.dim,
            });
        }
        Ok(Self {
            agent,
            base_url,
            dim,
            batch_size: batch_size.max(1),
        })
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp: EmbedResponse = self
            .agent
            .post(&format!("{}/embed", self.base_url))
            .send_json(EmbedRequest { texts })
            .map_err(|e| EmbedError::Transport(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::InvalidResponse(e.to_string()))?;
        if resp.vectors.len() != texts.len() {
            return Err(EmbedError::InvalidResponse(format!(
                "sent {} texts, got {} vectors",
                texts.len(),
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.dim,
                        actual: v.len(),
                    });
                }
                EmbeddingVector::new(v)
            })
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}
