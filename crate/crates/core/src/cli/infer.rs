use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context as _;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use super::ingest::{load_passages, CharacterEntry};
use super::manifest::timestamp;
use super::{parse_attributes, read_jsonl, write_file, write_jsonl, Context, Exit, RunManifest};
use crate::attribute::AttributeKind;
use crate::backends::{ChatBackend, EmbeddingBackend, GenerationConfig};
use crate::corpus::{CharacterIdentity, Passage};
use crate::inference::{build_prompt, run_inference, InferenceError, PromptTemplate, DEFAULT_TEMPLATE_VERSION};
use crate::postprocess::{parse_prediction, repair_json, CharacterPrediction, Provenance, RepairRule};
use crate::retrieval::{retrieve, CachedEmbedder, RetrievalConfig, RetrievalSelection};

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// Passage directory written by `ingest`.
    #[arg(long)]
    pub passages: PathBuf,
    /// Characters to predict, in output order (a gold file works).
    #[arg(long)]
    pub characters: PathBuf,
    /// Canned chat replies for --mock (overrides the config).
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Comma-separated attribute keys; all eight by default.
    #[arg(long, value_delimiter = ',')]
    pub attributes: Vec<String>,
}

/// Per-character retrieval and prompt size, written alongside predictions.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionRow {
    pub run_id: String,
    pub character_id: String,
    pub n_passages: usize,
    pub per_attribute: BTreeMap<AttributeKind, Vec<String>>,
    pub merged: Vec<String>,
}

#[derive(Debug, PartialEq, Eq, Clone, Copy)]
enum Failure {
    None,
    Data,
    Transport,
}

struct Outcome {
    prediction: CharacterPrediction,
    selection: RetrievalSelection,
    failure: Failure,
}

pub struct Pipeline<'a> {
    pub embedder: &'a dyn EmbeddingBackend,
    pub chat: &'a dyn ChatBackend,
    pub retrieval: &'a RetrievalConfig,
    pub generation: &'a GenerationConfig,
    pub template: &'a PromptTemplate,
    pub attributes: &'a [AttributeKind],
    pub run_id: &'a str,
    pub timestamp: &'a str,
}

impl Pipeline<'_> {
    fn provenance(&self, model_id: String) -> Provenance {
        Provenance {
            model_id,
            template_version: self.template.version.clone(),
            timestamp: self.timestamp.to_string(),
            run_id: self.run_id.to_string(),
            generation: self.generation.clone(),
        }
    }

    fn failed(&self, id: &str, selection: RetrievalSelection, failure: Failure, message: String) -> Outcome {
        let mut prediction = CharacterPrediction::empty(id);
        prediction.provenance = self.provenance(self.chat.identity());
        prediction.error = Some(message);
        Outcome { prediction, selection, failure }
    }

    /// Retrieval → prompt → chat → repair → parse for one character.
    fn predict(&self, identity: &CharacterIdentity, passages: &[Passage]) -> Outcome {
        let id = identity.character_id.as_str();
        let selection = match retrieve(&identity.name, passages, self.attributes, self.embedder, self.retrieval) {
            Ok(s) => s,
            Err(e) => return self.failed(id, RetrievalSelection::empty(), Failure::Transport, format!("retrieval: {e}")),
        };
        let prompt = match build_prompt(identity, &selection, passages, self.attributes, self.template) {
            Ok(p) => p,
            Err(e) => return self.failed(id, selection, Failure::Data, e.to_string()),
        };
        let raw = match run_inference(&prompt, self.chat, self.generation) {
            Ok(r) => r,
            Err(e @ (InferenceError::Timeout { .. } | InferenceError::Backend { .. })) => {
                return self.failed(id, selection, Failure::Transport, e.to_string())
            }
            Err(e) => return self.failed(id, selection, Failure::Data, e.to_string()),
        };
        let repaired = match repair_json(&raw.text) {
            Ok(r) => r,
            Err(e) => {
                let mut out = self.failed(id, selection, Failure::Data, format!("repair: {e}"));
                out.prediction.repairs = fired(e.log().fired());
                out.prediction.provenance.model_id = raw.model_id;
                return out;
            }
        };
        match parse_prediction(&repaired.text, id) {
            Ok(mut p) => {
                p.provenance = self.provenance(raw.model_id);
                p.repairs = fired(repaired.log.fired());
                Outcome { prediction: p, selection, failure: Failure::None }
            }
            Err(e) => {
                let mut out = self.failed(id, selection, Failure::Data, format!("parse: {e}"));
                out.prediction.repairs = fired(repaired.log.fired());
                out
            }
        }
    }
}

fn fired(rules: impl IntoIterator<Item = RepairRule>) -> Vec<String> {
    rules.into_iter().map(|r| r.name().to_string()).collect()
}

pub fn load_template(ctx: &Context) -> anyhow::Result<PromptTemplate> {
    match &ctx.config.template {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading template {}", path.display()))?;
            let version = ctx.config.template_version.clone().unwrap_or_else(|| {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "custom".into())
            });
            Ok(PromptTemplate::parse(&text, &version)?)
        }
        None => {
            let version = ctx.config.template_version.clone().unwrap_or_else(|| DEFAULT_TEMPLATE_VERSION.to_string());
            Ok(PromptTemplate { version, ..PromptTemplate::default() })
        }
    }
}

pub fn run(ctx: &Context, args: &InferArgs) -> anyhow::Result<()> {
    let attributes = parse_attributes(&args.attributes)?;
    let characters: Vec<CharacterEntry> = read_jsonl(&args.characters)?;
    let store = load_passages(&args.passages)?;
    let template = load_template(ctx)?;
    let embedder = ctx
        .embedder()?
        .ok_or_else(|| anyhow::anyhow!("no embedding backend configured: add an [embedding] section or pass --mock"))?;
    let embedder = CachedEmbedder::new(embedder);
    let chat = ctx.chat(args.fixtures.as_deref())?;

    let mut inputs = vec![args.passages.as_path(), args.characters.as_path()];
    let fixtures = args.fixtures.clone().or_else(|| ctx.config.mock_fixtures.clone()).filter(|_| ctx.mock);
    if let Some(f) = &fixtures {
        inputs.push(f.as_path());
    }
    let mut manifest = RunManifest::new("infer", ctx.config_snapshot(), &inputs, ctx.seed, !ctx.live(true))?;
    manifest.backends.insert("embedding".into(), embedder.identity());
    manifest.backends.insert("chat".into(), chat.identity());
    let ts = timestamp(!ctx.live(true));

    let mut identities = Vec::with_capacity(characters.len());
    for c in &characters {
        identities.push(c.identity()?);
    }
    let pipeline = Pipeline {
        embedder: &embedder,
        chat: chat.as_ref(),
        retrieval: &ctx.config.retrieval,
        generation: &ctx.config.generation,
        template: &template,
        attributes: &attributes,
        run_id: &manifest.run_id,
        timestamp: &ts,
    };
    let empty = Vec::new();
    let outcomes: Vec<Outcome> = ctx.pool()?.install(|| {
        identities
            .par_iter()
            .map(|identity| {
                let passages = match store.get(&identity.character_id) {
                    Some(c) => &c.passages,
                    None => {
                        tracing::warn!(character_id = %identity.character_id, "no passages ingested for character");
                        &empty
                    }
                };
                pipeline.predict(identity, passages)
            })
            .collect()
    });

    let mut rule_counts: BTreeMap<&str, usize> = RepairRule::ALL.iter().map(|r| (r.name(), 0)).collect();
    let mut predictions = Vec::with_capacity(outcomes.len());
    let mut selections = Vec::with_capacity(outcomes.len());
    let (mut n_failed, mut n_transport) = (0, 0);
    for (identity, o) in identities.iter().zip(outcomes) {
        for r in &o.prediction.repairs {
            if let Some(c) = rule_counts.get_mut(r.as_str()) {
                *c += 1;
            }
        }
        match o.failure {
            Failure::None => {}
            Failure::Data => n_failed += 1,
            Failure::Transport => {
                n_failed += 1;
                n_transport += 1;
            }
        }
        if let Some(e) = &o.prediction.error {
            eprintln!("{}: {e}", identity.character_id);
        }
        selections.push(SelectionRow {
            run_id: manifest.run_id.clone(),
            character_id: identity.character_id.clone(),
            n_passages: store.get(&identity.character_id).map_or(0, |c| c.passages.len()),
            per_attribute: o
                .selection
                .per_attribute
                .iter()
                .map(|(k, v)| (*k, v.iter().map(|p| p.passage_id.clone()).collect()))
                .collect(),
            merged: o.selection.merged.clone(),
        });
        predictions.push(o.prediction);
    }

    write_jsonl(&ctx.out.join("predictions.jsonl"), &predictions)?;
    write_jsonl(&ctx.out.join("selections.jsonl"), &selections)?;
    manifest.write(&ctx.out)?;
    let repaired = predictions.iter().filter(|p| !p.repairs.is_empty()).count();
    eprintln!("{} characters, {} failed, {} needed repair", predictions.len(), n_failed, repaired);
    let mut summary = String::new();
    for (rule, n) in &rule_counts {
        summary.push_str(&format!("{rule}\t{n}\n"));
    }
    eprint!("{summary}");
    write_file(&ctx.out.join("repair_stats.tsv"), &summary)?;

    if !predictions.is_empty() && n_transport == predictions.len() {
        return Err(Exit::systemic("every character failed at the backend; check the service configuration"));
    }
    Ok(())
}
