//! Best-effort import of a directory of published character files (JSON,
//! JSON Lines or CSV) into gold records. Column names are matched loosely;
//! rows that cannot be mapped are skipped with a warning.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::{age_from_years, normalize_values, parse_gender, GoldRecord};
use crate::attribute::AgeCategory;

#[derive(Debug, Default)]
pub struct Conversion {
    pub records: Vec<GoldRecord>,
    pub warnings: Vec<String>,
}

const COLUMNS: &[(&str, &[&str])] = &[
    ("character_id", &["characterid", "charid", "wikidataid", "qid", "id"]),
    ("book_id", &["bookid", "gutenbergid", "ebookid", "novelid", "book"]),
    ("name", &["name", "charactername", "label"]),
    ("aliases", &["aliases", "alias", "alsoknownas", "givenname"]),
    ("age", &["age", "agecategory", "agegroup"]),
    ("gender", &["gender", "sex"]),
    ("origin", &["origin", "placeoforigin", "countryoforigin", "placeofbirth"]),
    ("residence", &["residence", "placeofresidence"]),
    ("spoken_languages", &["spokenlanguages", "languages", "languagesspoken", "language"]),
    ("type", &["type", "typevalue", "instanceof"]),
    ("occupation", &["occupation", "occupations"]),
    ("physical_health", &["physicalhealth", "health", "medicalcondition"]),
];

fn squash(key: &str) -> String {
    key.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

fn field<'a>(row: &'a Map<String, Value>, name: &str) -> Option<&'a Value> {
    let aliases = COLUMNS.iter().find(|(n, _)| *n == name).map(|(_, a)| *a).unwrap_or_default();
    aliases.iter().find_map(|alias| row.iter().find(|(k, _)| squash(k) == *alias).map(|(_, v)| v))
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Accepts arrays, list-looking strings (`['a', 'b']`) and `;`/`|`
/// separated strings.
fn as_list(v: &Value) -> Vec<String> {
    match v {
        Value::Array(items) => items.iter().flat_map(as_list).collect(),
        Value::String(s) => {
            let t = s.trim();
            if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(t) {
                return items.iter().flat_map(as_list).collect();
            }
            let t = t.strip_prefix('[').and_then(|t| t.strip_suffix(']')).unwrap_or(t);
            let sep: &[char] = if t.starts_with(['\'', '"']) { &[','] } else { &[';', '|'] };
            t.split(sep)
                .map(|p| p.trim().trim_matches(['\'', '"']).trim().to_string())
                .filter(|p| !p.is_empty())
                .collect()
        }
        Value::Number(n) => vec![n.to_string()],
        _ => Vec::new(),
    }
}

fn age_of(v: &Value) -> Option<AgeCategory> {
    match v {
        Value::Number(n) => n.as_u64().map(|y| age_from_years(y.min(u32::MAX as u64) as u32)),
        Value::String(s) => AgeCategory::parse_loose(s).or_else(|| s.trim().parse::<u32>().ok().map(age_from_years)),
        _ => None,
    }
}

fn row_to_record(row: &Map<String, Value>, book_hint: &str) -> Result<GoldRecord, String> {
    let text = |k| field(row, k).and_then(as_text);
    let list = |k| field(row, k).map(as_list).unwrap_or_default();
    let name = text("name").ok_or("no name column")?;
    let book_id = text("book_id").unwrap_or_else(|| book_hint.to_string());
    let character_id = text("character_id").unwrap_or_else(|| format!("{book_id}:{name}"));
    let type_value = text("type").ok_or("no type value")?;
    Ok(normalize_values(GoldRecord {
        character_id,
        book_id,
        name,
        aliases: list("aliases"),
        age: field(row, "age").and_then(age_of),
        gender: text("gender").as_deref().and_then(parse_gender),
        origin: list("origin"),
        residence: list("residence"),
        spoken_languages: list("spoken_languages"),
        type_value,
        occupation: list("occupation"),
        physical_health: text("physical_health"),
    }))
}

fn read_rows(path: &Path) -> anyhow::Result<Vec<Map<String, Value>>> {
    let text = std::fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    let objects = |v: Value| -> Vec<Map<String, Value>> {
        match v {
            Value::Object(o) => vec![o],
            Value::Array(items) => items.into_iter().filter_map(|i| i.as_object().cloned()).collect(),
            _ => Vec::new(),
        }
    };
    Ok(match ext {
        "jsonl" => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<Value>)
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flat_map(objects)
            .collect(),
        "json" => objects(serde_json::from_str(&text)?),
        "csv" | "tsv" => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(if ext == "tsv" { b'\t' } else { b',' })
                .from_reader(text.as_bytes());
            let headers = reader.headers()?.clone();
            let mut rows = Vec::new();
            for rec in reader.records() {
                let rec = rec?;
                rows.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), Value::String(v.to_string()))).collect());
            }
            rows
        }
        _ => Vec::new(),
    })
}

/// Converts every data file directly under `dir`, in file-name order.
pub fn convert_published_dir(dir: &Path) -> anyhow::Result<Conversion> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl" | "csv" | "tsv")))
        .collect();
    files.sort();
    let mut out = Conversion::default();
    let mut seen = std::collections::HashSet::new();
    for file in files {
        let hint = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let rows = match read_rows(&file) {
            Ok(r) => r,
            Err(e) => {
                out.warnings.push(format!("{}: skipped ({e})", file.display()));
                continue;
            }
        };
        for (i, row) in rows.iter().enumerate() {
            match row_to_record(row, &hint) {
                Ok(r) if !seen.insert(r.character_id.clone()) => {
                    out.warnings.push(format!("{} row {}: duplicate character_id {}", file.display(), i + 1, r.character_id))
                }
                Ok(r) => out.records.push(r),
                Err(e) => out.warnings.push(format!("{} row {}: {e}", file.display(), i + 1)),
            }
        }
    }
    Ok(out)
}
