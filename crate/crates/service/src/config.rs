//! Service configuration. Values come from built-in defaults, then an
//! optional TOML file, then `Q2Q_*` environment variables, then CLI flags;
//! each layer overrides the previous one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "Q2Q_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{key}: cannot parse {value:?}")]
    Env { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Base URL of the embedding service; the offline hash embedder is used
    /// when unset.
    pub embedding_endpoint: Option<String>,
    pub embedding_dim: usize,
    pub embedding_batch_size: usize,
    /// Text-generation URL; ingestion is unavailable when unset.
    pub generation_endpoint: Option<String>,
    pub generation_max_tokens: u32,
    pub generation_timeout_secs: u64,
    pub max_questions: usize,
    pub sparql_endpoint: String,
    pub sparql_requests_per_second: f64,
    pub language: String,
    pub index_path: PathBuf,
    pub store_path: PathBuf,
    pub prompts_dir: PathBuf,
    pub tau: f64,
    pub k_default: usize,
    pub parallelism: usize,
    pub listen: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            embedding_endpoint: None,
            embedding_dim: 384,
            embedding_batch_size: 32,
            generation_endpoint: None,
            generation_max_tokens: 1024,
            generation_timeout_secs: 120,
            max_questions: q2q_core::qgen::DEFAULT_MAX_QUESTIONS,
            sparql_endpoint: "https://query.wikidata.org/sparql".into(),
            sparql_requests_per_second: 1.0,
            language: "en".into(),
            index_path: PathBuf::from("data/index.q2qx"),
            store_path: PathBuf::from("data/store.json"),
            prompts_dir: PathBuf::from("prompts"),
            tau: q2q_core::retrieval::DEFAULT_TAU,
            k_default: q2q_core::retrieval::DEFAULT_K,
            parallelism: 4,
            listen: "127.0.0.1:8080".into(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Env {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn optional(value: &str) -> Option<String> {
    let v = value.trim();
    (!v.is_empty()).then(|| v.to_string())
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Defaults, overridden by `file` when given, overridden by the
    /// environment as seen through `env`.
    pub fn load(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut config = match file {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        config.apply_env(env)?;
        Ok(config)
    }

    pub fn from_process_env(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(file, |k| std::env::var(k).ok())
    }

    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        for key in ENV_KEYS {
            let name = format!("{ENV_PREFIX}{}", key.to_uppercase());
            if let Some(value) = env(&name) {
                self.set(key, &value).map_err(|e| match e {
                    ConfigError::Env { value, .. } => ConfigError::Env { key: name.clone(), value },
                    other => other,
                })?;
            }
        }
        Ok(())
    }

    /// Sets one key from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "embedding_endpoint" => self.embedding_endpoint = optional(value),
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            "embedding_batch_size" => self.embedding_batch_size = parse(key, value)?,
            "generation_endpoint" => self.generation_endpoint = optional(value),
            "generation_max_tokens" => self.generation_max_tokens = parse(key, value)?,
            "generation_timeout_secs" => self.generation_timeout_secs = parse(key, value)?,
            "max_questions" => self.max_questions = parse(key, value)?,
            "sparql_endpoint" => self.sparql_endpoint = value.trim().to_string(),
            "sparql_requests_per_second" => self.sparql_requests_per_second = parse(key, value)?,
            "language" => self.language = value.trim().to_string(),
            "index_path" => self.index_path = PathBuf::from(value),
            "store_path" => self.store_path = PathBuf::from(value),
            "prompts_dir" => self.prompts_dir = PathBuf::from(value),
            "tau" => self.tau = parse(key, value)?,
            "k_default" => self.k_default = parse(key, value)?,
            "parallelism" => self.parallelism = parse(key, value)?,
            "listen" => self.listen = value.trim().to_string(),
            other => return Err(ConfigError::Invalid(format!("unknown key {other}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive");
        }
        if self.endpoint_free_dim_too_small() {
            return fail("embedding_dim must be at least 8 for the offline embedder");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail("tau must lie in [0, 1]");
        }
        if self.k_default == 0 {
            return fail("k_default must be positive");
        }
        if self.parallelism == 0 || self.embedding_batch_size == 0 || self.max_questions == 0 {
            return fail("parallelism, embedding_batch_size and max_questions must be positive");
        }
        if !self.prompts_dir.is_dir() {
            return Err(ConfigError::Invalid(format!("prompts_dir {} is not a directory", self.prompts_dir.display())));
        }
        Ok(())
    }

    fn endpoint_free_dim_too_small(&self) -> bool {
        self.embedding_endpoint.is_none() && self.embedding_dim < 8
    }
}

/// Keys settable through the environment as `Q2Q_<KEY>`.
pub const ENV_KEYS: [&str; 17] = [
    "embedding_endpoint",
    "embedding_dim",
    "embedding_batch_size",
    "generation_endpoint",
    "generation_max_tokens",
    "generation_timeout_secs",
    "max_questions",
    "sparql_endpoint",
    "sparql_requests_per_second",
    "language",
    "index_path",
    "store_path",
    "prompts_dir",
    "tau",
    "k_default",
    "parallelism",
    "listen",
];
