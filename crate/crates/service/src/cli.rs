//! Command-line surface. Every command goes through [`Engine`], the same
//! code path the HTTP routes use.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, ServiceConfig};
use crate::engine::{Engine, EngineError};
use crate::http::{QueryResponse, ResultBody};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Output(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "q2q", version, about = "Question-to-question retrieval over articles and Wikidata facts")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "Q2Q_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// One flag per configuration key; flags beat environment, file and defaults.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub embedding_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub embedding_dim: Option<String>,
    #[arg(long, global = true)]
    pub embedding_batch_size: Option<String>,
    #[arg(long, global = true)]
    pub generation_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub generation_max_tokens: Option<String>,
    #[arg(long, global = true)]
    pub generation_timeout_secs: Option<String>,
    #[arg(long, global = true)]
    pub max_questions: Option<String>,
    #[arg(long, global = true)]
    pub sparql_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub sparql_requests_per_second: Option<String>,
    #[arg(long, global = true)]
    pub language: Option<String>,
    #[arg(long, global = true)]
    pub index_path: Option<String>,
    #[arg(long, global = true)]
    pub store_path: Option<String>,
    #[arg(long, global = true)]
    pub prompts_dir: Option<String>,
    #[arg(long, global = true)]
    pub tau: Option<String>,
    #[arg(long, global = true)]
    pub k_default: Option<String>,
    #[arg(long, global = true)]
    pub parallelism: Option<String>,
    #[arg(long, global = true)]
    pub listen: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> [(&'static str, &Option<String>); 17] {
        [
            ("embedding_endpoint", &self.embedding_endpoint),
            ("embedding_dim", &self.embedding_dim),
            ("embedding_batch_size", &self.embedding_batch_size),
            ("generation_endpoint", &self.generation_endpoint),
            ("generation_max_tokens", &self.generation_max_tokens),
            ("generation_timeout_secs", &self.generation_timeout_secs),
            ("max_questions", &self.max_questions),
            ("sparql_endpoint", &self.sparql_endpoint),
            ("sparql_requests_per_second", &self.sparql_requests_per_second),
            ("language", &self.language),
            ("index_path", &self.index_path),
            ("store_path", &self.store_path),
            ("prompts_dir", &self.prompts_dir),
            ("tau", &self.tau),
            ("k_default", &self.k_default),
            ("parallelism", &self.parallelism),
            ("listen", &self.listen),
        ]
    }

    pub fn apply(&self, config: &mut ServiceConfig) -> Result<(), ConfigError> {
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                config.set(key, v).map_err(|e| match e {
                    ConfigError::Env { value, .. } => ConfigError::Env {
                        key: format!("--{}", key.replace('_', "-")),
                        value,
                    },
                    other => other,
                })?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP server.
    Serve,
    /// Add or update articles from a JSON Lines file (`-` reads stdin).
    Ingest { file: PathBuf },
    /// Like `ingest`, but also removes stored articles absent from the file.
    Reindex { file: PathBuf },
    /// Fetch and index the statements of one or more Wikidata items.
    IngestWikidata {
        #[arg(required = true)]
        qids: Vec<String>,
    },
    /// Answer a question from the index.
    Query {
        text: String,
        #[arg(short, long)]
        k: Option<usize>,
    },
    /// Compare question-to-question against question-to-passage scores.
    EvalAblation {
        /// Plain-text passage.
        #[arg(long)]
        passage: PathBuf,
        /// One query per line.
        #[arg(long)]
        queries: PathBuf,
        /// Pre-generated questions, one per line; generated when omitted.
        #[arg(long)]
        questions: Option<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the current index to a file.
    SaveIndex { path: PathBuf },
    /// Replace the index with one read from a file.
    LoadIndex { path: PathBuf },
    /// Print index and store counters.
    Status,
}

/// Resolves the configuration: flags, then `Q2Q_*` variables, then the
/// file, then defaults.
pub fn resolve_config(cli: &Cli, env: impl Fn(&str) -> Option<String>) -> Result<ServiceConfig, ConfigError> {
    let mut config = ServiceConfig::load(cli.config.as_deref(), env)?;
    cli.overrides.apply(&mut config)?;
    Ok(config)
}

fn read_input(path: &Path) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(io_err(path))?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(io_err(path))
}

/// Non-empty trimmed lines, with any leading list marker removed.
fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(read_input(path)?
        .lines()
        .map(|l| l.trim().trim_start_matches(['-', '*']).trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn print_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Output(e.to_string()))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let config = resolve_config(&cli, |k| std::env::var(k).ok())?;
    let engine = Engine::from_config(config)?;
    match cli.command {
        Command::Serve => {
            let listen = engine.config().listen.clone();
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Output(e.to_string()))?;
            runtime
                .block_on(crate::http::serve(Arc::new(engine), &listen))
                .map_err(|e| CliError::Output(format!("serving on {listen}: {e}")))?;
        }
        Command::Ingest { file } => print_json(out, &engine.ingest_jsonl(&read_input(&file)?, false)?)?,
        Command::Reindex { file } => print_json(out, &engine.ingest_jsonl(&read_input(&file)?, true)?)?,
        Command::IngestWikidata { qids } => {
            for qid in qids {
                let report = engine.ingest_wikidata(&qid)?;
                print_json(out, &serde_json::json!({ "qid": qid, "report": report }))?;
            }
        }
        Command::Query { text, k } => {
            let results = engine.query(&text, k)?;
            print_json(
                out,
                &QueryResponse {
                    query: text,
                    results: results.into_iter().map(ResultBody::from).collect(),
                },
            )?;
        }
        Command::EvalAblation {
            passage,
            queries,
            questions,
            out: csv_path,
        } => {
            let passage = read_input(&passage)?;
            let queries = read_lines(&queries)?;
            let questions = questions.as_deref().map(read_lines).transpose()?;
            let report = engine.ablation(&queries, passage.trim(), questions)?;
            match &csv_path {
                Some(p) => {
                    let file = std::fs::File::create(p).map_err(io_err(p))?;
                    report.write_csv(file).map_err(|e| CliError::Output(e.to_string()))?;
                }
                None => report.write_csv(&mut *out).map_err(|e| CliError::Output(e.to_string()))?,
            }
            log::info!("mean q2q {:.4}, mean q2p {:.4}", report.mean_q2q(), report.mean_q2p());
        }
        Command::SaveIndex { path } => {
            let bytes = engine.save_index(&path)?;
            print_json(out, &serde_json::json!({ "path": path, "bytes": bytes }))?;
        }
        Command::LoadIndex { path } => print_json(out, &engine.load_index(&path)?)?,
        Command::Status => print_json(out, &engine.status())?,
    }
    Ok(())
}
