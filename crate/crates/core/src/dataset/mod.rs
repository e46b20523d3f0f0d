//! Gold records: loading, validation, normalization, the majority-value
//! baseline and coverage statistics.

pub mod convert;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::attribute::{AgeCategory, AttributeKind, Gender};
use crate::postprocess::CharacterPrediction;

pub use convert::{convert_published_dir, Conversion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub character_id: String,
    pub book_id: String,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub age: Option<AgeCategory>,
    pub gender: Option<Gender>,
    #[serde(default)]
    pub origin: Vec<String>,
    #[serde(default)]
    pub residence: Vec<String>,
    #[serde(default)]
    pub spoken_languages: Vec<String>,
    #[serde(rename = "type")]
    pub type_value: String,
    #[serde(default)]
    pub occupation: Vec<String>,
    pub physical_health: Option<String>,
}

impl GoldRecord {
    pub fn list(&self, kind: AttributeKind) -> Option<&[String]> {
        match kind {
            AttributeKind::Origin => Some(&self.origin),
            AttributeKind::Residence => Some(&self.residence),
            AttributeKind::SpokenLanguages => Some(&self.spoken_languages),
            AttributeKind::Occupation => Some(&self.occupation),
            _ => None,
        }
    }

    pub fn scalar(&self, kind: AttributeKind) -> Option<&str> {
        match kind {
            AttributeKind::Age => self.age.map(AgeCategory::as_str),
            AttributeKind::Gender => self.gender.map(Gender::as_str),
            AttributeKind::Type => Some(&self.type_value),
            AttributeKind::PhysicalHealth => self.physical_health.as_deref(),
            _ => None,
        }
    }

    /// Values of an attribute; empty when the gold is missing.
    pub fn values(&self, kind: AttributeKind) -> Vec<String> {
        match self.list(kind) {
            Some(items) => items.to_vec(),
            None => self.scalar(kind).map(|s| vec![s.to_string()]).unwrap_or_default(),
        }
    }

    pub fn is_filled(&self, kind: AttributeKind) -> bool {
        match self.list(kind) {
            Some(items) => !items.is_empty(),
            None => self.scalar(kind).is_some_and(|s| !s.trim().is_empty()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineProblem {
    pub line: usize,
    pub problems: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum GoldError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} invalid line(s) in {path}:\n{}", .lines.len(), format_problems(.lines))]
    Invalid { path: PathBuf, lines: Vec<LineProblem> },
}

fn format_problems(lines: &[LineProblem]) -> String {
    lines
        .iter()
        .map(|l| format!("  line {}: {}", l.line, l.problems.join("; ")))
        .collect::<Vec<_>>()
        .join("\n")
}

const FIELDS: [&str; 12] = [
    "character_id",
    "book_id",
    "name",
    "aliases",
    "age",
    "gender",
    "origin",
    "residence",
    "spoken_languages",
    "type",
    "occupation",
    "physical_health",
];

/// Checks one JSON object against the gold schema, naming every offending
/// field.
fn validate(obj: &Map<String, Value>) -> Vec<String> {
    let mut problems = Vec::new();
    for key in obj.keys() {
        if !FIELDS.contains(&key.as_str()) {
            problems.push(format!("unknown field `{key}`"));
        }
    }
    for key in ["character_id", "book_id", "name", "type"] {
        match obj.get(key) {
            Some(Value::String(s)) if !s.trim().is_empty() => {}
            Some(Value::String(_)) => problems.push(format!("`{key}` is empty")),
            Some(_) => problems.push(format!("`{key}` must be a string")),
            None => problems.push(format!("missing required field `{key}`")),
        }
    }
    for key in ["aliases", "origin", "residence", "spoken_languages", "occupation"] {
        match obj.get(key) {
            None | Some(Value::Null) => {}
            Some(Value::Array(items)) if items.iter().all(Value::is_string) => {}
            Some(_) => problems.push(format!("`{key}` must be a list of strings")),
        }
    }
    match obj.get("age") {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) if AgeCategory::parse_loose(s).is_some() => {}
        Some(v) => problems.push(format!("`age` must be one of child, teenager, adult, senior (got {v})")),
    }
    match obj.get("gender") {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) if parse_gender(s).is_some() => {}
        Some(v) => problems.push(format!("`gender` must be one of male, female (got {v})")),
    }
    match obj.get("physical_health") {
        None | Some(Value::Null | Value::String(_)) => {}
        Some(_) => problems.push("`physical_health` must be a string".into()),
    }
    problems
}

pub fn parse_gender(s: &str) -> Option<Gender> {
    match s.trim().to_lowercase().as_str() {
        "male" => Some(Gender::Male),
        "female" => Some(Gender::Female),
        _ => None,
    }
}

fn record_from(obj: &Map<String, Value>) -> GoldRecord {
    let s = |k: &str| obj.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
    let list = |k: &str| {
        obj.get(k)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default()
    };
    GoldRecord {
        character_id: s("character_id"),
        book_id: s("book_id"),
        name: s("name"),
        aliases: list("aliases"),
        age: obj.get("age").and_then(Value::as_str).and_then(AgeCategory::parse_loose),
        gender: obj.get("gender").and_then(Value::as_str).and_then(parse_gender),
        origin: list("origin"),
        residence: list("residence"),
        spoken_languages: list("spoken_languages"),
        type_value: s("type"),
        occupation: list("occupation"),
        physical_health: obj.get("physical_health").and_then(Value::as_str).map(str::to_string),
    }
}

/// Parses gold JSON Lines. Every line is checked and all problems are
/// reported together; blank lines are skipped.
pub fn parse_gold(text: &str, path: &Path) -> Result<Vec<GoldRecord>, GoldError> {
    let mut records = Vec::new();
    let mut bad = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let obj = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(o)) => o,
            Ok(_) => {
                bad.push(LineProblem { line: lineno, problems: vec!["line is not a JSON object".into()] });
                continue;
            }
            Err(e) => {
                bad.push(LineProblem { line: lineno, problems: vec![format!("invalid JSON: {e}")] });
                continue;
            }
        };
        let mut problems = validate(&obj);
        let rec = normalize_values(record_from(&obj));
        if problems.is_empty() && !ids.insert(rec.character_id.clone()) {
            problems.push(format!("duplicate character_id `{}`", rec.character_id));
        }
        if problems.is_empty() {
            records.push(rec);
        } else {
            bad.push(LineProblem { line: lineno, problems });
        }
    }
    if bad.is_empty() {
        Ok(records)
    } else {
        Err(GoldError::Invalid { path: path.to_path_buf(), lines: bad })
    }
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldRecord>, GoldError> {
    let text = std::fs::read_to_string(path).map_err(|source| GoldError::Io { path: path.to_path_buf(), source })?;
    parse_gold(&text, path)
}

pub fn write_gold(records: &[GoldRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

/// Age group for an age in years.
pub fn age_from_years(years: u32) -> AgeCategory {
    match years {
        0..=12 => AgeCategory::Child,
        13..=17 => AgeCategory::Teenager,
        18..=59 => AgeCategory::Adult,
        _ => AgeCategory::Senior,
    }
}

static LANGUAGES: LazyLock<HashMap<String, String>> = LazyLock::new(|| {
    include_str!("../../data/languages.tsv")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
});

/// Canonical spelling of a language name; unknown names are returned
/// trimmed but otherwise unchanged.
pub fn canonical_language(name: &str) -> String {
    let trimmed = name.trim();
    LANGUAGES.get(&trimmed.to_lowercase()).cloned().unwrap_or_else(|| trimmed.to_string())
}

/// Trimmed, case-insensitively deduplicated (first spelling kept), empty
/// items dropped.
pub fn dedup_list(items: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(s.to_lowercase()))
        .collect()
}

pub fn normalize_values(mut record: GoldRecord) -> GoldRecord {
    record.character_id = record.character_id.trim().to_string();
    record.book_id = record.book_id.trim().to_string();
    record.name = record.name.trim().to_string();
    record.aliases = dedup_list(&record.aliases);
    let name = record.name.clone();
    record.aliases.retain(|a| *a != name);
    record.origin = dedup_list(&record.origin);
    record.residence = dedup_list(&record.residence);
    record.occupation = dedup_list(&record.occupation);
    let langs: Vec<String> = record.spoken_languages.iter().map(|l| canonical_language(l)).collect();
    record.spoken_languages = dedup_list(&langs);
    record.type_value = record.type_value.trim().to_string();
    record.physical_health = record.physical_health.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
    record
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no gold records")]
    Empty,
}

/// Most frequent value per attribute, emitted identically for every
/// character.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorityBaseline {
    pub template: CharacterPrediction,
}

fn mode<'a>(values: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // BTreeMap iterates lexicographically, so the first maximum wins ties.
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|&(_, c)| c == best).map(|(v, _)| v.to_string())
}

pub fn majority_baseline(records: &[GoldRecord]) -> Result<MajorityBaseline, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    let scalar = |kind| mode(records.iter().filter_map(|r| r.scalar(kind)).filter(|s| !s.is_empty()));
    // Each record contributes each of its (already deduplicated) items once.
    let list = |kind| {
        mode(records.iter().flat_map(|r| r.list(kind).unwrap_or_default().iter().map(String::as_str)))
            .into_iter()
            .collect::<Vec<_>>()
    };
    let template = CharacterPrediction {
        age: scalar(AttributeKind::Age).as_deref().and_then(AgeCategory::parse_loose),
        gender: scalar(AttributeKind::Gender),
        origin: list(AttributeKind::Origin),
        residence: list(AttributeKind::Residence),
        spoken_languages: list(AttributeKind::SpokenLanguages),
        type_value: scalar(AttributeKind::Type),
        occupation: list(AttributeKind::Occupation),
        physical_health: scalar(AttributeKind::PhysicalHealth),
        ..Default::default()
    };
    Ok(MajorityBaseline { template })
}

impl MajorityBaseline {
    pub fn predict(&self, record: &GoldRecord) -> CharacterPrediction {
        CharacterPrediction { character_id: record.character_id.clone(), ..self.template.clone() }
    }

    pub fn predictions(&self, records: &[GoldRecord]) -> Vec<CharacterPrediction> {
        records.iter().map(|r| self.predict(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub filled: usize,
    pub total: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total: usize,
    /// Set when there are no records; every fraction is then 0.
    pub empty: bool,
    pub attributes: BTreeMap<AttributeKind, Coverage>,
}

pub fn coverage_stats(records: &[GoldRecord]) -> CoverageReport {
    let total = records.len();
    let attributes = AttributeKind::ALL
        .iter()
        .map(|&kind| {
            let filled = records.iter().filter(|r| r.is_filled(kind)).count();
            let fraction = if total == 0 { 0.0 } else { filled as f64 / total as f64 };
            (kind, Coverage { filled, total, fraction })
        })
        .collect();
    CoverageReport { total, empty: total == 0, attributes }
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "| Attribute | Filled | Coverage |")?;
        writeln!(f, "|---|---:|---:|")?;
        for (kind, c) in &self.attributes {
            writeln!(f, "| {} | {}/{} | {:.1}% |", kind.label(), c.filled, c.total, c.fraction * 100.0)?;
        }
        Ok(())
    }
}
