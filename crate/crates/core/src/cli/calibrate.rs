use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::Context as _;
use clap::Args;
use serde::Serialize;

use super::annotate::JudgmentRecord;
use super::{read_jsonl, write_file, Context, Exit, RunManifest};
use crate::attribute::AttributeKind;
use crate::metrics::{
    default_instruction, fit_isotonic, is_human, krippendorff_alpha_interval, score_open_class, spearman_rho,
    CalibrationFile, OpenClassItem, ScoreStatus,
};

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Judgment files from `annotate --task judgment`, one per annotator.
    #[arg(long = "judgments", required = true)]
    pub judgments: Vec<PathBuf>,
    /// Instances CSV from `evaluate`; similarities are recomputed with the
    /// embedding backend when omitted.
    #[arg(long)]
    pub similarities: Option<PathBuf>,
}

/// Judgments of one (character, attribute) pair, by annotator.
#[derive(Debug, Clone, Default)]
pub struct JudgedItem {
    pub gold: String,
    pub pred: String,
    pub scores: BTreeMap<String, f64>,
}

impl JudgedItem {
    pub fn mean(&self) -> f64 {
        self.scores.values().sum::<f64>() / self.scores.len() as f64
    }
}

pub type Judgments = BTreeMap<(AttributeKind, String), JudgedItem>;

pub fn group_judgments(records: &[JudgmentRecord]) -> Judgments {
    let mut out = Judgments::new();
    for r in records {
        let item = out.entry((r.attribute, r.character_id.clone())).or_default();
        item.gold.clone_from(&r.gold);
        item.pred.clone_from(&r.pred);
        // A repeated judgment from the same annotator replaces the earlier one.
        item.scores.insert(r.annotator_id.clone(), r.score);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributeFit {
    pub kind: AttributeKind,
    pub n_pairs: usize,
    pub spearman_rho: Option<f64>,
    pub spearman_p: Option<f64>,
    pub krippendorff_alpha: Option<f64>,
}

/// Interval α over the items × annotators grid of one attribute.
pub fn alpha_for(items: &[&JudgedItem], annotators: &BTreeSet<String>) -> Option<f64> {
    if annotators.len() < 2 {
        return None;
    }
    let grid: Vec<Vec<Option<f64>>> =
        items.iter().map(|it| annotators.iter().map(|a| it.scores.get(a).copied()).collect()).collect();
    krippendorff_alpha_interval(&grid).ok()
}

fn read_similarities(path: &std::path::Path) -> anyhow::Result<BTreeMap<(AttributeKind, String), (f64, String)>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<BTreeMap<String, String>>() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        let get = |k: &str| row.get(k).cloned().with_context(|| format!("{}: missing column {k}", path.display()));
        let kind: AttributeKind = get("attribute")?.parse()?;
        let cosine: f64 = get("cosine")?.parse().with_context(|| format!("{}: bad cosine", path.display()))?;
        out.insert((kind, get("character_id")?), (cosine, get("status")?));
    }
    Ok(out)
}

pub fn run(ctx: &Context, args: &CalibrateArgs) -> anyhow::Result<()> {
    let mut records: Vec<JudgmentRecord> = Vec::new();
    for p in &args.judgments {
        records.extend(read_jsonl::<JudgmentRecord>(p)?);
    }
    if records.is_empty() {
        return Err(Exit::data("no judgments found"));
    }
    let judgments = group_judgments(&records);
    let annotators: BTreeSet<String> = records.iter().map(|r| r.annotator_id.clone()).collect();

    let backend = if args.similarities.is_some() { None } else { ctx.embedder()? };
    let precomputed = args.similarities.as_deref().map(read_similarities).transpose()?;
    if precomputed.is_none() && backend.is_none() {
        anyhow::bail!("pass --similarities or configure an embedding backend (or --mock)");
    }

    let mut inputs: Vec<&std::path::Path> = args.judgments.iter().map(PathBuf::as_path).collect();
    inputs.extend(args.similarities.as_deref());
    let mut manifest = RunManifest::new("calibrate", ctx.config_snapshot(), &inputs, ctx.seed, !ctx.live(backend.is_some()))?;
    if let Some(b) = &backend {
        manifest.backends.insert("embedding".into(), b.identity());
    }

    let mut file = CalibrationFile { run_id: manifest.run_id.clone(), attributes: BTreeMap::new() };
    let mut fits = Vec::new();
    for kind in AttributeKind::ALL {
        let Some(instruction) = default_instruction(kind) else { continue };
        let items: Vec<(&String, &JudgedItem)> =
            judgments.iter().filter(|((k, _), _)| *k == kind).map(|((_, id), it)| (id, it)).collect();
        if items.is_empty() {
            continue;
        }
        // Only genuinely scored pairs inform the curve: missing predictions
        // and human/non-human confusions are fixed at 0 when applied.
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        match &precomputed {
            Some(sims) => {
                for (id, it) in &items {
                    match sims.get(&(kind, (*id).clone())) {
                        Some((cos, status)) if status == "scored" => pairs.push((*cos, it.mean())),
                        Some(_) => {}
                        None => tracing::warn!(character_id = %id, attribute = kind.key(), "no similarity for judged item"),
                    }
                }
            }
            None => {
                let usable: Vec<&(&String, &JudgedItem)> = items
                    .iter()
                    .filter(|(_, it)| !it.gold.is_empty() && !it.pred.is_empty())
                    .filter(|(_, it)| kind != AttributeKind::Type || is_human(&it.pred) == is_human(&it.gold))
                    .collect();
                let oc: Vec<OpenClassItem> = usable
                    .iter()
                    .map(|(id, it)| OpenClassItem { character_id: (*id).clone(), gold: vec![it.gold.clone()], pred: vec![it.pred.clone()] })
                    .collect();
                let scores = score_open_class::<f64, _>(kind, &oc, backend.as_deref().expect("checked above"), instruction)
                    .map_err(|e| Exit::systemic(format!("{}: {e}", kind.key())))?;
                for (s, (_, it)) in scores.iter().zip(&usable) {
                    if s.status == ScoreStatus::Scored {
                        pairs.push((s.cosine, it.mean()));
                    }
                }
            }
        }
        if pairs.is_empty() {
            eprintln!("{}: no scored pairs, skipped", kind.key());
            continue;
        }
        let mut cal = fit_isotonic(kind, &pairs).map_err(|e| Exit::data(format!("{}: {e}", kind.key())))?;
        cal.instruction = instruction.to_string();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let rho = spearman_rho(&xs, &ys).ok();
        let judged: Vec<&JudgedItem> = items.iter().map(|(_, it)| *it).collect();
        let fit = AttributeFit {
            kind,
            n_pairs: pairs.len(),
            spearman_rho: rho.as_ref().map(|r| r.rho),
            spearman_p: rho.as_ref().map(|r| r.p_value),
            krippendorff_alpha: alpha_for(&judged, &annotators),
        };
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "–".into());
        eprintln!(
            "{}: {} pairs, {} breakpoints, Spearman ρ {} (p {}), α {}",
            kind.key(),
            fit.n_pairs,
            cal.breakpoints.len(),
            fmt(fit.spearman_rho),
            fmt(fit.spearman_p),
            fmt(fit.krippendorff_alpha)
        );
        file.attributes.insert(kind, cal);
        fits.push(fit);
    }
    if file.attributes.is_empty() {
        return Err(Exit::data("no attribute had scored pairs to fit"));
    }
    write_file(&ctx.out.join("calibration.json"), &(serde_json::to_string_pretty(&file)? + "\n"))?;
    write_file(&ctx.out.join("calibration_fit.json"), &(serde_json::to_string_pretty(&fits)? + "\n"))?;
    manifest.write(&ctx.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, ann: &str, score: f64) -> JudgmentRecord {
        JudgmentRecord {
            character_id: id.into(),
            attribute: AttributeKind::Origin,
            gold: "France".into(),
            pred: "Paris".into(),
            score,
            annotator_id: ann.into(),
        }
    }

    #[test]
    fn mean_over_annotators_and_alpha() {
        let records = vec![rec("a", "x", 1.0), rec("a", "y", 0.5), rec("b", "x", 0.0), rec("b", "y", 0.0), rec("a", "y", 0.75)];
        let j = group_judgments(&records);
        let a = &j[&(AttributeKind::Origin, "a".to_string())];
        assert!((a.mean() - 0.875).abs() < 1e-12);
        let annotators: BTreeSet<String> = ["x".to_string(), "y".to_string()].into();
        let items: Vec<&JudgedItem> = j.values().collect();
        assert!(alpha_for(&items, &annotators).is_some());
        assert!(alpha_for(&items, &["x".to_string()].into()).is_none());
    }
}
