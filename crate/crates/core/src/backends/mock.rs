//! Deterministic offline backends.
//!
//! The mock embedder hashes lower-cased alphanumeric tokens (together with
//! the instruction and seed) into pseudo-random directions and sums them,
//! so texts sharing words land closer together. The mock chat backend
//! serves canned replies keyed by character name.

use std::collections::BTreeMap;
use std::time::Duration;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, EmbeddingBackend, EmbeddingVector, GenerationConfig, RawModelOutput};
use crate::attribute::AttributeKind;

pub const DEFAULT_MOCK_DIM: usize = 64;

#[derive(Debug, Clone)]
pub struct MockEmbeddingBackend {
    seed: u64,
    dim: usize,
}

impl MockEmbeddingBackend {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "mock dimension must be positive");
        Self { seed, dim }
    }

    fn direction(&self, instruction: &str, piece: &str, out: &mut [f64]) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(instruction.as_bytes());
        h.update([0u8]);
        h.update(piece.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        for slot in out.iter_mut() {
            // 53 high bits mapped onto [-1, 1)
            let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            *slot += unit * 2.0 - 1.0;
        }
    }

    pub fn embed_one(&self, instruction: &str, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dim];
        let mut any = false;
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            self.direction(instruction, &token.to_lowercase(), &mut acc);
            any = true;
        }
        if !any {
            self.direction(instruction, text, &mut acc);
        }
        EmbeddingVector::normalized(acc).unwrap_or_else(|| {
            // Token directions cancelled exactly; fall back to the whole text.
            let mut whole = vec![0.0f64; self.dim];
            self.direction(instruction, text, &mut whole);
            EmbeddingVector::normalized(whole).expect("random direction is non-zero")
        })
    }
}

impl EmbeddingBackend for MockEmbeddingBackend {
    fn embed(&self, instruction: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(instruction, t)).collect())
    }

    fn identity(&self) -> String {
        format!("mock-embeddings:seed={}:dim={}", self.seed, self.dim)
    }
}

/// Wrappers that make a canned reply look like typical raw model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Malformation {
    /// Prefix a `<think>` reasoning block.
    Think,
    /// Wrap the reply in a ```json fence.
    Fences,
    /// Drop the quotes around simple string items in arrays.
    UnquotedItems,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    /// Canned reply as JSON. Ignored when `raw` is set.
    #[serde(default)]
    pub response: Value,
    /// Canned reply text served verbatim (before malformations).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default)]
    pub malformations: Vec<Malformation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissPolicy {
    Error,
    #[default]
    NullReply,
}

/// Fixture file layout: `{"miss": "null_reply", "characters": {name: fixture}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockChatFixtures {
    #[serde(default)]
    pub miss: MissPolicy,
    #[serde(default)]
    pub characters: BTreeMap<String, MockFixture>,
}

#[derive(Debug, Clone)]
pub struct MockChatBackend {
    seed: u64,
    fixtures: MockChatFixtures,
}

pub const MOCK_CHAT_MODEL: &str = "mock-chat";

impl MockChatBackend {
    pub fn new(seed: u64, fixtures: MockChatFixtures) -> Self {
        Self { seed, fixtures }
    }

    pub fn render(fixture: &MockFixture) -> String {
        let mut text = match &fixture.raw {
            Some(raw) => raw.clone(),
            None if fixture.malformations.contains(&Malformation::UnquotedItems) => {
                render_unquoted(&fixture.response, 0)
            }
            None => serde_json::to_string_pretty(&fixture.response).expect("serializable"),
        };
        if fixture.malformations.contains(&Malformation::Fences) {
            text = format!("```json\n{text}\n```");
        }
        if fixture.malformations.contains(&Malformation::Think) {
            text = format!("<think>\nReading the passages before answering.\n</think>\n{text}");
        }
        text
    }
}

/// A reply with every attribute set to null.
pub fn null_reply() -> String {
    let map: serde_json::Map<String, Value> =
        AttributeKind::ALL.iter().map(|k| (k.key().to_string(), Value::Null)).collect();
    serde_json::to_string_pretty(&Value::Object(map)).expect("serializable")
}

fn render_unquoted(v: &Value, depth: usize) -> String {
    let pad = "  ".repeat(depth + 1);
    let close = "  ".repeat(depth);
    match v {
        Value::Object(map) if !map.is_empty() => {
            let members: Vec<String> = map
                .iter()
                .map(|(k, v)| format!("{pad}{}: {}", Value::String(k.clone()), render_unquoted(v, depth + 1)))
                .collect();
            format!("{{\n{}\n{close}}}", members.join(",\n"))
        }
        Value::Array(items) => {
            let rendered: Vec<String> = items
                .iter()
                .map(|item| match item {
                    Value::String(s) if is_simple_word_list_item(s) => s.clone(),
                    other => render_unquoted(other, depth + 1),
                })
                .collect();
            format!("[{}]", rendered.join(", "))
        }
        other => other.to_string(),
    }
}

fn is_simple_word_list_item(s: &str) -> bool {
    !s.trim().is_empty()
        && s.trim() == s
        && s.chars().all(|c| c.is_alphanumeric() || c == ' ' || c == '-' || c == '.')
        && s.parse::<f64>().is_err()
        && !matches!(s, "true" | "false" | "null" | "None" | "True" | "False")
}

/// Extracts the character name from a prompt's `Character:` line.
pub fn prompt_character_name(user: &str) -> Option<&str> {
    user.lines().find_map(|l| l.strip_prefix("Character:")).map(str::trim)
}

impl ChatBackend for MockChatBackend {
    fn complete(&self, _system: &str, user: &str, _gen: &GenerationConfig) -> Result<RawModelOutput, BackendError> {
        let name = prompt_character_name(user).unwrap_or_default();
        let text = match self.fixtures.characters.get(name) {
            Some(f) => Self::render(f),
            None => match self.fixtures.miss {
                MissPolicy::Error => return Err(BackendError::FixtureMiss(name.to_string())),
                MissPolicy::NullReply => null_reply(),
            },
        };
        Ok(RawModelOutput { text, model_id: MOCK_CHAT_MODEL.to_string(), timing: Duration::ZERO })
    }

    fn identity(&self) -> String {
        format!("mock-chat:seed={}:fixtures={}", self.seed, self.fixtures.characters.len())
    }
}

pub fn make_mock_backends(seed: u64, fixtures: MockChatFixtures) -> (MockEmbeddingBackend, MockChatBackend) {
    (MockEmbeddingBackend::new(seed, DEFAULT_MOCK_DIM), MockChatBackend::new(seed, fixtures))
}
