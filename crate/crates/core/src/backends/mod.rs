//! Client contracts for embedding and chat model services.
//!
//! [`http`] talks to OpenAI-compatible servers; [`mock`] provides seeded,
//! fully deterministic stand-ins for offline runs and tests.

pub mod http;
pub mod mock;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::num::Scalar;

pub use http::{HttpChatBackend, HttpEmbeddingBackend};
pub use mock::{make_mock_backends, Malformation, MissPolicy, MockChatBackend, MockChatFixtures, MockEmbeddingBackend, MockFixture, DEFAULT_MOCK_DIM, MOCK_CHAT_MODEL};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("embedding dimension changed within a session: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no mock fixture for character `{0}`")]
    FixtureMiss(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, BackendError::Timeout { .. })
    }
}

/// Retry policy: `max_retries` additional attempts after the first, with
/// exponential backoff starting at `backoff_base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 2, backoff_base: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.backoff_base.saturating_mul(1u32 << attempt.min(16))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub max_parallel: usize,
    pub retry: RetryPolicy,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored in the config.
    pub api_key_env: Option<String>,
    /// Inputs per embeddings request.
    pub batch_size: usize,
}

impl BackendConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            timeout: Duration::from_secs(120),
            max_parallel: 4,
            retry: RetryPolicy::default(),
            api_key_env: Some(DEFAULT_API_KEY_ENV.to_string()),
            batch_size: 32,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_parallel < 1 {
            return Err(BackendError::Config("max_parallel must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(BackendError::Config("batch_size must be >= 1".into()));
        }
        if self.base_url.trim().is_empty() {
            return Err(BackendError::Config("base_url is empty".into()));
        }
        Ok(())
    }

    pub(crate) fn api_key(&self) -> Option<String> {
        self.api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty())
    }
}

pub const DEFAULT_API_KEY_ENV: &str = "VOICEATTR_API_KEY";

/// A unit-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EmbeddingVector<T: Scalar = f64> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    /// Normalizes `values` to unit L2 norm. Returns `None` for empty or zero
    /// vectors, or vectors with non-finite components.
    pub fn normalized(values: Vec<T>) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let norm = values.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        if norm == T::zero() {
            return None;
        }
        Some(Self { values: values.into_iter().map(|v| v / norm).collect() })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Cosine similarity of two unit vectors, clamped to [-1, 1].
    pub fn cosine(&self, other: &Self) -> T {
        assert_eq!(self.dim(), other.dim(), "embedding dimensions differ");
        let dot = self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        crate::num::clamp(dot, -T::one(), T::one())
    }
}

/// Generation parameters forwarded to the chat service. Unset values are
/// omitted so the server defaults apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Completion text exactly as returned by the chat service.
#[derive(Debug, Clone, PartialEq)]
pub struct RawModelOutput {
    pub text: String,
    pub model_id: String,
    pub timing: Duration,
}

pub trait EmbeddingBackend: Send + Sync {
    /// Embeds `texts` conditioned on `instruction`; output order matches input.
    fn embed(&self, instruction: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError>;

    /// Identity recorded into run manifests.
    fn identity(&self) -> String;
}

pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        system: &str,
        user: &str,
        gen: &GenerationConfig,
    ) -> Result<RawModelOutput, BackendError>;

    fn identity(&self) -> String;
}

impl<B: EmbeddingBackend + ?Sized> EmbeddingBackend for &B {
    fn embed(&self, instruction: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        (**self).embed(instruction, texts)
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
}

impl<B: EmbeddingBackend + ?Sized> EmbeddingBackend for Box<B> {
    fn embed(&self, instruction: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        (**self).embed(instruction, texts)
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, system: &str, user: &str, gen: &GenerationConfig) -> Result<RawModelOutput, BackendError> {
        (**self).complete(system, user, gen)
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
