//! TOML run configuration.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendConfig, GenerationConfig, RetryPolicy, DEFAULT_API_KEY_ENV};
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_key_env")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_timeout_ms() -> u64 {
    120_000
}
fn default_parallel() -> usize {
    4
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_key_env() -> Option<String> {
    Some(DEFAULT_API_KEY_ENV.to_string())
}
fn default_batch() -> usize {
    32
}

impl BackendSection {
    pub fn to_backend_config(&self) -> BackendConfig {
        BackendConfig {
            base_url: self.base_url.clone(),
            model_name: self.model_name.clone(),
            timeout: Duration::from_millis(self.timeout_ms),
            max_parallel: self.max_parallel,
            retry: RetryPolicy { max_retries: self.max_retries, backoff_base: Duration::from_millis(self.backoff_ms) },
            api_key_env: self.api_key_env.clone(),
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub strip_boilerplate: bool,
    pub retrieval: RetrievalConfig,
    pub generation: GenerationConfig,
    pub embedding: Option<BackendSection>,
    pub chat: Option<BackendSection>,
    /// Prompt template file; the shipped template when unset.
    pub template: Option<PathBuf>,
    pub template_version: Option<String>,
    /// Canned replies for `--mock` runs.
    pub mock_fixtures: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            strip_boilerplate: true,
            retrieval: RetrievalConfig::default(),
            generation: GenerationConfig::default(),
            embedding: None,
            chat: None,
            template: None,
            template_version: None,
            mock_fixtures: None,
        }
    }
}

impl Config {
    /// Loads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.template, &mut cfg.mock_fixtures].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.retrieval.k >= 1, "retrieval.k must be at least 1");
        anyhow::ensure!(self.retrieval.window_words >= 1, "retrieval.window_words must be at least 1");
        for section in [&self.embedding, &self.chat].into_iter().flatten() {
            section.to_backend_config().validate()?;
        }
        Ok(())
    }
}
