//! One combined prompt per character, sent to a chat backend.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::attribute::AttributeKind;
use crate::backends::{BackendError, ChatBackend, GenerationConfig, RawModelOutput};
use crate::corpus::{CharacterIdentity, Passage};
use crate::retrieval::RetrievalSelection;

pub const DEFAULT_TEMPLATE_VERSION: &str = "inference-v1";
const DEFAULT_TEMPLATE: &str = include_str!("../templates/inference_v1.txt");
const PLACEHOLDERS: [&str; 4] = ["name", "aliases", "passages", "attribute_instructions"];
pub const NO_PASSAGES_NOTICE: &str = "(No passages mentioning this character were found. Answer from the name alone or use null.)";

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("no attributes requested")]
    NoAttributes,
    #[error("character {character_id}: selected passage {passage_id} is not in the passage store")]
    MissingPassage { character_id: String, passage_id: String },
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("character {character_id}: chat request timed out")]
    Timeout {
        character_id: String,
        #[source]
        source: BackendError,
    },
    #[error("character {character_id}: chat request failed: {source}")]
    Backend {
        character_id: String,
        #[source]
        source: BackendError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub system: String,
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE, DEFAULT_TEMPLATE_VERSION).expect("shipped template is valid")
    }
}

impl PromptTemplate {
    /// Parses a template file: `#` comment lines, then a `[system]` and a
    /// `[user]` section. The user section must use every placeholder.
    pub fn parse(text: &str, version: &str) -> Result<Self, InferenceError> {
        let mut system = Vec::new();
        let mut user = Vec::new();
        let mut section = None;
        for line in text.lines() {
            match line.trim_end() {
                "[system]" => section = Some(&mut system),
                "[user]" => section = Some(&mut user),
                l if l.starts_with('#') && section.is_none() => {}
                _ => match section.as_mut() {
                    Some(lines) => lines.push(line),
                    None if line.trim().is_empty() => {}
                    None => return Err(InferenceError::Template("text before the first section".into())),
                },
            }
        }
        let join = |lines: Vec<&str>| lines.join("\n").trim().to_string();
        let (system, user) = (join(system), join(user));
        if user.is_empty() {
            return Err(InferenceError::Template("missing [user] section".into()));
        }
        if let Some(p) = PLACEHOLDERS.iter().find(|p| !user.contains(&format!("{{{p}}}"))) {
            return Err(InferenceError::Template(format!("user section lacks {{{p}}}")));
        }
        Ok(Self { version: version.to_string(), system, user })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferencePrompt {
    pub character_id: String,
    pub template_version: String,
    pub system_text: String,
    pub user_text: String,
}

/// Replaces `{key}` placeholders in one pass, so substituted text (which may
/// itself contain braces) is never re-expanded.
fn fill(template: &str, values: &HashMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').map(|close| (&after[..close], close)) {
            Some((key, close)) if values.contains_key(key) => {
                out.push_str(&values[key]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn instruction(kind: AttributeKind, name: &str) -> String {
    let body = match kind {
        AttributeKind::Age => "age group; one of: child, teenager, adult, senior".to_string(),
        AttributeKind::Gender => "one of: male, female".to_string(),
        AttributeKind::Origin => format!("JSON array of the places {name} comes from"),
        AttributeKind::Residence => format!("JSON array of the places where {name} lives"),
        AttributeKind::SpokenLanguages => format!("JSON array of the languages {name} speaks"),
        AttributeKind::Type => format!("what kind of entity {name} is: \"human\", or the kind of animal, creature or object"),
        AttributeKind::Occupation => format!("JSON array of {name}'s occupations"),
        AttributeKind::PhysicalHealth => format!("short text describing {name}'s physical health condition"),
    };
    format!("- \"{}\": {body}", kind.key())
}

/// Builds the prompt. Passages appear numbered in merged selection order;
/// attributes appear in canonical order whatever order they were requested in.
pub fn build_prompt(
    identity: &CharacterIdentity,
    selection: &RetrievalSelection,
    passages: &[Passage],
    attributes: &[AttributeKind],
    template: &PromptTemplate,
) -> Result<InferencePrompt, InferenceError> {
    if attributes.is_empty() {
        return Err(InferenceError::NoAttributes);
    }
    let store: HashMap<&str, &Passage> = passages.iter().map(|p| (p.passage_id.as_str(), p)).collect();
    let mut blocks = Vec::with_capacity(selection.merged.len());
    for (i, id) in selection.merged.iter().enumerate() {
        let p = store.get(id.as_str()).ok_or_else(|| InferenceError::MissingPassage {
            character_id: identity.character_id.clone(),
            passage_id: id.clone(),
        })?;
        blocks.push(format!("[{}] {}", i + 1, p.text));
    }
    let passages_text = if blocks.is_empty() { NO_PASSAGES_NOTICE.to_string() } else { blocks.join("\n\n") };
    let kinds: BTreeSet<AttributeKind> = attributes.iter().copied().collect();
    let instructions: Vec<String> = kinds.iter().map(|&k| instruction(k, &identity.name)).collect();
    let aliases = if identity.aliases.is_empty() { "none".to_string() } else { identity.aliases.join("; ") };

    let values = HashMap::from([
        ("name", identity.name.clone()),
        ("aliases", aliases),
        ("passages", passages_text),
        ("attribute_instructions", instructions.join("\n")),
    ]);
    Ok(InferencePrompt {
        character_id: identity.character_id.clone(),
        template_version: template.version.clone(),
        system_text: fill(&template.system, &values),
        user_text: fill(&template.user, &values),
    })
}

/// Sends the prompt and returns the completion untouched.
pub fn run_inference<B: ChatBackend + ?Sized>(
    prompt: &InferencePrompt,
    backend: &B,
    config: &GenerationConfig,
) -> Result<RawModelOutput, InferenceError> {
    backend.complete(&prompt.system_text, &prompt.user_text, config).map_err(|source| {
        let character_id = prompt.character_id.clone();
        if source.is_timeout() {
            InferenceError::Timeout { character_id, source }
        } else {
            InferenceError::Backend { character_id, source }
        }
    })
}
