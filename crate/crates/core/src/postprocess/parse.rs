//! Schema coercion of repaired JSON into a [`CharacterPrediction`].

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attribute::{AgeCategory, AttributeKind};
use crate::backends::GenerationConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("top-level JSON value is {0}, expected an object")]
    NotAnObject(&'static str),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub template_version: String,
    pub timestamp: String,
    pub run_id: String,
    #[serde(default)]
    pub generation: GenerationConfig,
}

/// One character's predicted attributes. Field order is the serialized key
/// order of prediction files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CharacterPrediction {
    pub character_id: String,
    pub age: Option<AgeCategory>,
    pub gender: Option<String>,
    #[serde(default)]
    pub origin: Vec<String>,
    #[serde(default)]
    pub residence: Vec<String>,
    #[serde(default)]
    pub spoken_languages: Vec<String>,
    #[serde(rename = "type")]
    pub type_value: Option<String>,
    #[serde(default)]
    pub occupation: Vec<String>,
    pub physical_health: Option<String>,
    #[serde(default)]
    pub provenance: Provenance,
    /// Rules that fired while repairing the raw reply.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repairs: Vec<String>,
    /// Set when the character could not be predicted; all attributes are
    /// then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CharacterPrediction {
    pub fn empty(character_id: impl Into<String>) -> Self {
        Self { character_id: character_id.into(), ..Default::default() }
    }

    pub fn list(&self, kind: AttributeKind) -> Option<&[String]> {
        match kind {
            AttributeKind::Origin => Some(&self.origin),
            AttributeKind::Residence => Some(&self.residence),
            AttributeKind::SpokenLanguages => Some(&self.spoken_languages),
            AttributeKind::Occupation => Some(&self.occupation),
            _ => None,
        }
    }

    fn list_mut(&mut self, kind: AttributeKind) -> Option<&mut Vec<String>> {
        match kind {
            AttributeKind::Origin => Some(&mut self.origin),
            AttributeKind::Residence => Some(&mut self.residence),
            AttributeKind::SpokenLanguages => Some(&mut self.spoken_languages),
            AttributeKind::Occupation => Some(&mut self.occupation),
            _ => None,
        }
    }

    /// Text value of a scalar attribute.
    pub fn scalar(&self, kind: AttributeKind) -> Option<&str> {
        match kind {
            AttributeKind::Age => self.age.map(AgeCategory::as_str),
            AttributeKind::Gender => self.gender.as_deref(),
            AttributeKind::Type => self.type_value.as_deref(),
            AttributeKind::PhysicalHealth => self.physical_health.as_deref(),
            _ => None,
        }
    }

    /// Attribute values, a scalar rendered as a one-element list.
    pub fn values(&self, kind: AttributeKind) -> Vec<String> {
        match self.list(kind) {
            Some(items) => items.to_vec(),
            None => self.scalar(kind).map(|s| vec![s.to_string()]).unwrap_or_default(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("prediction serializes")
    }
}

fn is_null_word(s: &str) -> bool {
    matches!(s.trim().to_lowercase().as_str(), "" | "null" | "none" | "n/a" | "unknown")
}

/// Normalizes a reply key: case, spaces and a few spellings models use.
fn attribute_for_key(key: &str) -> Option<AttributeKind> {
    let norm = key.trim().to_lowercase().replace([' ', '-'], "_");
    match norm.as_str() {
        "type_value" | "entity_type" => Some(AttributeKind::Type),
        "languages" | "spoken_language" => Some(AttributeKind::SpokenLanguages),
        "health" => Some(AttributeKind::PhysicalHealth),
        _ => norm.parse().ok(),
    }
}

fn collect_items(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => out.push(s.trim().to_string()),
        Value::Number(n) => out.push(n.to_string()),
        Value::Array(items) => items.iter().for_each(|i| collect_items(i, out)),
        Value::Object(map) => map.values().for_each(|i| collect_items(i, out)),
        Value::Null | Value::Bool(_) => {}
    }
}

/// Trims, drops placeholders and removes case-insensitive duplicates,
/// keeping the first spelling.
pub fn dedup_items(items: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !is_null_word(s))
        .filter(|s| seen.insert(s.to_lowercase()))
        .collect()
}

pub fn parse_prediction(json_text: &str, character_id: &str) -> Result<CharacterPrediction, ParseError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| ParseError::Json(e.to_string()))?;
    let obj = match &value {
        Value::Object(m) => m,
        Value::Array(_) => return Err(ParseError::NotAnObject("an array")),
        Value::String(_) => return Err(ParseError::NotAnObject("a string")),
        Value::Number(_) => return Err(ParseError::NotAnObject("a number")),
        Value::Bool(_) => return Err(ParseError::NotAnObject("a boolean")),
        Value::Null => return Err(ParseError::NotAnObject("null")),
    };

    let mut pred = CharacterPrediction::empty(character_id);
    let mut seen = Vec::new();
    for (key, v) in obj {
        let Some(kind) = attribute_for_key(key) else { continue };
        // First spelling of a key wins.
        if seen.contains(&kind) {
            continue;
        }
        seen.push(kind);
        if let Some(list) = pred.list_mut(kind) {
            let mut items = Vec::new();
            collect_items(v, &mut items);
            *list = dedup_items(items);
            continue;
        }
        // Scalars: anything but a string is discarded.
        let text = v.as_str().map(str::trim).filter(|s| !is_null_word(s)).map(str::to_string);
        match kind {
            AttributeKind::Age => pred.age = text.as_deref().and_then(AgeCategory::parse_loose),
            AttributeKind::Gender => pred.gender = text,
            AttributeKind::Type => pred.type_value = text,
            AttributeKind::PhysicalHealth => pred.physical_health = text,
            _ => unreachable!("list attributes handled above"),
        }
    }
    Ok(pred)
}
