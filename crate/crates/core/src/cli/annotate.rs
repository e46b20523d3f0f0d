//! Terminal annotation: age categories for characters, or agreement scores
//! for (gold, prediction) pairs. Each decision is appended and flushed at
//! once, so an interrupted session loses nothing and resumes where it
//! stopped.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ingest::load_passages;
use super::{read_jsonl, Context};
use crate::attribute::{AgeCategory, AttributeKind};
use crate::metrics::serialize_values;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Age,
    Judgment,
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Items: JSON Lines (or an instances CSV from `evaluate` for judgments).
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub annotator: String,
    /// Output file; defaults to `<out>/<task>_<annotator>.jsonl`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Passage directory, for showing excerpts during age annotation.
    #[arg(long)]
    pub passages: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeAnnotation {
    pub character_id: String,
    pub annotator_id: String,
    /// `None` when the annotator left the item blank.
    pub age: Option<AgeCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub character_id: String,
    pub attribute: AttributeKind,
    pub gold: String,
    pub pred: String,
    pub score: f64,
    pub annotator_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Age { character_id: String, name: String, context: Vec<String> },
    Judgment { character_id: String, attribute: AttributeKind, gold: String, pred: String },
}

impl Item {
    pub fn key(&self) -> String {
        match self {
            Item::Age { character_id, .. } => character_id.clone(),
            Item::Judgment { character_id, attribute, .. } => format!("{character_id}/{}", attribute.key()),
        }
    }
}

const FIVE_POINT: &[(f64, &str)] = &[
    (0.0, "wrong or unrelated place"),
    (0.25, "only the broad region matches (e.g. continent)"),
    (0.5, "right country but wrong area, or some places missing"),
    (0.75, "right but less specific than gold, or more specific than can be checked"),
    (1.0, "matches gold (synonyms, neighbouring cities, capital of a gold country)"),
];
const OCCUPATION: &[(f64, &str)] = &[
    (0.0, "wrong occupation"),
    (0.25, "same field, different job"),
    (0.5, "some occupations right, unrelated ones missing"),
    (0.75, "right field but less precise, or right plus an extra occupation"),
    (1.0, "correct or synonymous, possibly more precise"),
];
const HEALTH: &[(f64, &str)] = &[
    (0.0, "unrelated, or good/poor health status wrong"),
    (0.33, "vague, but good/poor health status right"),
    (0.66, "right but less specific than gold"),
    (1.0, "correct or synonymous"),
];
const TYPE: &[(f64, &str)] = &[
    (0.0, "wrong, or human/non-human confused"),
    (0.33, "wrong entity, human/non-human right"),
    (0.66, "more general than gold"),
    (1.0, "correct or synonymous"),
];

/// Allowed scores and their meaning; `None` for closed-class attributes.
pub fn scale(kind: AttributeKind) -> Option<&'static [(f64, &'static str)]> {
    match kind {
        AttributeKind::Origin | AttributeKind::Residence => Some(FIVE_POINT),
        AttributeKind::Occupation => Some(OCCUPATION),
        AttributeKind::PhysicalHealth => Some(HEALTH),
        AttributeKind::Type => Some(TYPE),
        _ => None,
    }
}

pub fn parse_score(kind: AttributeKind, input: &str) -> Option<f64> {
    let v: f64 = input.trim().parse().ok()?;
    scale(kind)?.iter().map(|&(s, _)| s).find(|s| (s - v).abs() < 1e-9)
}

pub fn parse_age(input: &str) -> Option<Option<AgeCategory>> {
    match input.trim().to_lowercase().as_str() {
        "" | "-" | "blank" => Some(None),
        "c" => Some(Some(AgeCategory::Child)),
        "t" => Some(Some(AgeCategory::Teenager)),
        "a" => Some(Some(AgeCategory::Adult)),
        "s" => Some(Some(AgeCategory::Senior)),
        other => AgeCategory::parse_loose(other).map(Some),
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct SessionSummary {
    pub recorded: usize,
    pub already_done: usize,
    pub quit: bool,
}

fn show(ui: &mut impl Write, item: &Item, index: usize, total: usize) -> std::io::Result<()> {
    writeln!(ui, "\n[{}/{}]", index + 1, total)?;
    match item {
        Item::Age { character_id, name, context } => {
            writeln!(ui, "Character: {name} ({character_id})")?;
            for c in context {
                writeln!(ui, "  … {c} …")?;
            }
            writeln!(ui, "Use a stated age if there is one: 0-12 child, 13-17 teenager, 18-59 adult, 60+ senior.")?;
            writeln!(ui, "Otherwise judge from descriptions; leave blank if the text does not decide it.")?;
            write!(ui, "age [child/teenager/adult/senior, c/t/a/s, empty = blank, q = quit]: ")?;
        }
        Item::Judgment { character_id, attribute, gold, pred } => {
            writeln!(ui, "{} of {character_id}", attribute.label())?;
            writeln!(ui, "  gold: {gold}")?;
            writeln!(ui, "  pred: {pred}")?;
            for (s, meaning) in scale(*attribute).unwrap_or_default() {
                writeln!(ui, "  {s}: {meaning}")?;
            }
            write!(ui, "score (q = quit): ")?;
        }
    }
    ui.flush()
}

/// Prompts for every item not in `done`, appending one JSON line per
/// decision to `sink`. End of input or `q` ends the session cleanly.
pub fn run_session(
    items: &[Item],
    done: &HashSet<String>,
    annotator: &str,
    input: &mut impl BufRead,
    ui: &mut impl Write,
    sink: &mut impl Write,
) -> anyhow::Result<SessionSummary> {
    let mut summary = SessionSummary::default();
    for (i, item) in items.iter().enumerate() {
        if done.contains(&item.key()) {
            summary.already_done += 1;
            continue;
        }
        loop {
            show(ui, item, i, items.len())?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                summary.quit = true;
                return Ok(summary);
            }
            if line.trim().eq_ignore_ascii_case("q") {
                summary.quit = true;
                return Ok(summary);
            }
            let record = match item {
                Item::Age { character_id, .. } => parse_age(&line).map(|age| {
                    serde_json::to_string(&AgeAnnotation {
                        character_id: character_id.clone(),
                        annotator_id: annotator.to_string(),
                        age,
                    })
                }),
                Item::Judgment { character_id, attribute, gold, pred } => parse_score(*attribute, &line).map(|score| {
                    serde_json::to_string(&JudgmentRecord {
                        character_id: character_id.clone(),
                        attribute: *attribute,
                        gold: gold.clone(),
                        pred: pred.clone(),
                        score,
                        annotator_id: annotator.to_string(),
                    })
                }),
            };
            match record {
                Some(json) => {
                    writeln!(sink, "{}", json?)?;
                    sink.flush()?;
                    summary.recorded += 1;
                    break;
                }
                None => writeln!(ui, "not an allowed answer: {}", line.trim())?,
            }
        }
    }
    Ok(summary)
}

fn text_of(v: &Value) -> String {
    match v {
        Value::Array(items) => serialize_values(&items.iter().map(text_of).collect::<Vec<_>>()),
        Value::String(s) => s.trim().to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

#[derive(Deserialize)]
struct RawJudgmentItem {
    character_id: String,
    attribute: AttributeKind,
    #[serde(default)]
    gold: Value,
    #[serde(default)]
    pred: Value,
}

#[derive(Deserialize)]
struct RawAgeItem {
    character_id: String,
    name: String,
}

pub fn load_items(args: &AnnotateArgs) -> anyhow::Result<Vec<Item>> {
    match args.task {
        Task::Age => {
            let raw: Vec<RawAgeItem> = read_jsonl(&args.items)?;
            let store = match &args.passages {
                Some(dir) => Some(load_passages(dir)?),
                None => None,
            };
            Ok(raw
                .into_iter()
                .map(|r| {
                    let context = store
                        .as_ref()
                        .and_then(|s| s.get(&r.character_id))
                        .map(|c| c.passages.iter().take(3).map(|p| p.text.clone()).collect())
                        .unwrap_or_default();
                    Item::Age { character_id: r.character_id, name: r.name, context }
                })
                .collect())
        }
        Task::Judgment => {
            let raw: Vec<RawJudgmentItem> = if args.items.extension().is_some_and(|e| e == "csv") {
                let mut reader = csv::Reader::from_path(&args.items).with_context(|| format!("opening {}", args.items.display()))?;
                let mut rows = Vec::new();
                for rec in reader.deserialize::<std::collections::HashMap<String, String>>() {
                    let rec = rec?;
                    let get = |k: &str| rec.get(k).cloned().unwrap_or_default();
                    rows.push(RawJudgmentItem {
                        character_id: get("character_id"),
                        attribute: get("attribute").parse()?,
                        gold: Value::String(get("gold")),
                        pred: Value::String(get("pred")),
                    });
                }
                rows
            } else {
                read_jsonl(&args.items)?
            };
            let mut items = Vec::new();
            for r in raw {
                if scale(r.attribute).is_none() {
                    eprintln!("skipping {}: {} has no judgment scale", r.character_id, r.attribute.key());
                    continue;
                }
                items.push(Item::Judgment { character_id: r.character_id, attribute: r.attribute, gold: text_of(&r.gold), pred: text_of(&r.pred) });
            }
            Ok(items)
        }
    }
}

/// Keys already present in an annotation file.
pub fn completed_keys(path: &std::path::Path, task: Task) -> anyhow::Result<HashSet<String>> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    let rows: Vec<Value> = read_jsonl(path)?;
    Ok(rows
        .iter()
        .filter_map(|v| {
            let id = v.get("character_id")?.as_str()?;
            match task {
                Task::Age => Some(id.to_string()),
                Task::Judgment => Some(format!("{id}/{}", v.get("attribute")?.as_str()?)),
            }
        })
        .collect())
}

pub fn run(ctx: &Context, args: &AnnotateArgs) -> anyhow::Result<()> {
    let items = load_items(args)?;
    let task = match args.task {
        Task::Age => "age",
        Task::Judgment => "judgment",
    };
    let output = args.output.clone().unwrap_or_else(|| ctx.out.join(format!("{task}_{}.jsonl", args.annotator)));
    let done = completed_keys(&output, args.task)?;
    let mut sink = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&output)
        .with_context(|| format!("opening {}", output.display()))?;
    let stdin = std::io::stdin();
    let summary = run_session(&items, &done, &args.annotator, &mut stdin.lock(), &mut std::io::stderr(), &mut sink)?;
    eprintln!(
        "\n{} recorded, {} already done, {} remaining; saved to {}",
        summary.recorded,
        summary.already_done,
        items.len() - summary.recorded - summary.already_done,
        output.display()
    );
    Ok(())
}
