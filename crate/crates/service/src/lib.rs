//! HTTP API, configuration and command-line surface over `q2q-core`.

pub mod cli;
pub mod config;
pub mod engine;
pub mod http;
