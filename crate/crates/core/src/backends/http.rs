//! OpenAI-compatible HTTP clients (`/embeddings`, `/chat/completions`).

use std::sync::Mutex;
use std::time::Instant;

use serde::Deserialize;
use serde_json::{json, Value};
use ureq::Agent;

use super::{
    BackendConfig, BackendError, ChatBackend, EmbeddingBackend, EmbeddingVector, GenerationConfig, RawModelOutput,
};

/// Folds an instruction into the input text using the prefix convention of
/// instruction-tuned encoders. An empty instruction leaves the text alone.
pub fn fold_instruction(instruction: &str, text: &str) -> String {
    if instruction.trim().is_empty() {
        text.to_string()
    } else {
        format!("Instruct: {instruction}\nQuery: {text}")
    }
}

struct Transport {
    config: BackendConfig,
    agent: Agent,
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl Transport {
    fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// POSTs `body`, retrying transport errors, timeouts, 429 and 5xx.
    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = self.url(path);
        let key = self.config.api_key();
        let policy = self.config.retry;
        let mut attempt = 0u32;
        loop {
            tracing::debug!(%url, authorization = if key.is_some() { "Bearer ***" } else { "none" }, body = %body, "POST");
            match self.try_once(&url, key.as_deref(), body) {
                Ok(v) => {
                    tracing::debug!(%url, response = %v, "response");
                    return Ok(v);
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempt >= policy.max_retries {
                        return Err(match e {
                            BackendError::Timeout { .. } => BackendError::Timeout { attempts: attempt + 1 },
                            BackendError::Transport { message, .. } => {
                                BackendError::Transport { attempts: attempt + 1, message }
                            }
                            other => other,
                        });
                    }
                    tracing::warn!(%url, attempt, error = %e, "request failed, retrying");
                    std::thread::sleep(policy.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn try_once(&self, url: &str, key: Option<&str>, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(k) = key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(classify(e))),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Retry(classify(e)))?;
        if status == 429 || (500..600).contains(&status) {
            return Err(Attempt::Retry(BackendError::Status { status, body: text }));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(BackendError::Status { status, body: text }));
        }
        serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(BackendError::Protocol(format!("response is not JSON: {e}"))))
    }
}

fn classify(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout { attempts: 1 },
        ureq::Error::Io(io)
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) =>
        {
            BackendError::Timeout { attempts: 1 }
        }
        other => BackendError::Transport { attempts: 1, message: other.to_string() },
    }
}

pub struct HttpEmbeddingBackend {
    transport: Transport,
    dim: Mutex<Option<usize>>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl HttpEmbeddingBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        Ok(Self { transport: Transport::new(config)?, dim: Mutex::new(None) })
    }

    fn check_dim(&self, got: usize) -> Result<(), BackendError> {
        let mut dim = self.dim.lock().expect("dim lock");
        match *dim {
            Some(expected) if expected != got => Err(BackendError::DimensionMismatch { expected, got }),
            Some(_) => Ok(()),
            None => {
                *dim = Some(got);
                Ok(())
            }
        }
    }

    fn embed_batch(&self, inputs: Vec<String>) -> Result<Vec<EmbeddingVector>, BackendError> {
        let n = inputs.len();
        let body = json!({ "model": self.transport.config.model_name, "input": inputs });
        let value = self.transport.post("embeddings", &body)?;
        let mut resp: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| BackendError::Protocol(format!("unexpected embeddings response: {e}")))?;
        if resp.data.len() != n {
            return Err(BackendError::Protocol(format!("expected {n} embeddings, got {}", resp.data.len())));
        }
        if resp.data.iter().all(|d| d.index.is_some()) {
            resp.data.sort_by_key(|d| d.index);
        }
        resp.data
            .into_iter()
            .map(|item| {
                self.check_dim(item.embedding.len())?;
                EmbeddingVector::normalized(item.embedding)
                    .ok_or_else(|| BackendError::Protocol("zero or non-finite embedding".into()))
            })
            .collect()
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn embed(&self, instruction: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.transport.config.batch_size) {
            let inputs = chunk.iter().map(|t| fold_instruction(instruction, t)).collect();
            out.extend(self.embed_batch(inputs)?);
        }
        Ok(out)
    }

    fn identity(&self) -> String {
        format!("http-embeddings:{}@{}", self.transport.config.model_name, self.transport.config.base_url)
    }
}

pub struct HttpChatBackend {
    transport: Transport,
}

impl HttpChatBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        Ok(Self { transport: Transport::new(config)? })
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, system: &str, user: &str, gen: &GenerationConfig) -> Result<RawModelOutput, BackendError> {
        if user.trim().is_empty() {
            return Err(BackendError::Config("user message is empty".into()));
        }
        let mut body = json!({
            "model": self.transport.config.model_name,
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": user },
            ],
        });
        let obj = body.as_object_mut().expect("object literal");
        if let Some(t) = gen.temperature {
            obj.insert("temperature".into(), json!(t));
        }
        if let Some(m) = gen.max_tokens {
            obj.insert("max_tokens".into(), json!(m));
        }
        for (k, v) in &gen.extra {
            obj.insert(k.clone(), v.clone());
        }
        let started = Instant::now();
        let value = self.transport.post("chat/completions", &body)?;
        let text = extract_content(&value)?;
        Ok(RawModelOutput {
            text,
            model_id: value
                .get("model")
                .and_then(Value::as_str)
                .unwrap_or(&self.transport.config.model_name)
                .to_string(),
            timing: started.elapsed(),
        })
    }

    fn identity(&self) -> String {
        format!("http-chat:{}@{}", self.transport.config.model_name, self.transport.config.base_url)
    }
}

fn extract_content(value: &Value) -> Result<String, BackendError> {
    let choices = value
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Protocol("response has no `choices` array".into()))?;
    let first = choices
        .first()
        .ok_or_else(|| BackendError::Protocol("response has empty `choices`".into()))?;
    first
        .pointer("/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Protocol("first choice has no message content".into()))
}
