use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;

use super::manifest::timestamp;
use super::{parse_attributes, read_jsonl, write_file, write_jsonl, Context, Exit, GoldArgs, RunManifest};
use crate::attribute::AttributeKind;
use crate::backends::EmbeddingBackend;
use crate::dataset::{convert_published_dir, coverage_stats, load_gold, majority_baseline, write_gold, GoldRecord};
use crate::evaluate::{evaluate, paired_csv, EvaluateOptions, EvaluationReport};
use crate::metrics::CalibrationFile;
use crate::postprocess::{CharacterPrediction, Provenance};

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub gold: GoldArgs,
    #[arg(long)]
    pub predictions: PathBuf,
    /// A second system; adds report_b.* and a paired per-instance CSV.
    #[arg(long)]
    pub predictions_b: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Skip open-class similarity even when an embedding backend exists.
    #[arg(long)]
    pub no_similarity: bool,
    #[arg(long, value_delimiter = ',')]
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub gold: GoldArgs,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub no_similarity: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Evaluation report JSON files, one column each.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Column names, in the same order (file stems by default).
    #[arg(long = "name")]
    pub names: Vec<String>,
}

/// Loads gold from a JSONL file or converts a published-format directory
/// (also writing the converted file to the output directory).
pub fn load_gold_args(ctx: &Context, args: &GoldArgs) -> anyhow::Result<(Vec<GoldRecord>, PathBuf)> {
    if let Some(path) = &args.gold {
        return Ok((load_gold(path).map_err(|e| Exit::data(e.to_string()))?, path.clone()));
    }
    let dir = args.from_svocal.as_ref().expect("clap enforces one of the group");
    let conv = convert_published_dir(dir)?;
    for w in &conv.warnings {
        eprintln!("convert: {w}");
    }
    if conv.records.is_empty() {
        return Err(Exit::data(format!("no records converted from {}", dir.display())));
    }
    let out = ctx.out.join("gold.jsonl");
    write_file(&out, &write_gold(&conv.records))?;
    eprintln!("converted {} records into {}", conv.records.len(), out.display());
    Ok((conv.records, out))
}

fn load_calibration(path: Option<&Path>) -> anyhow::Result<Option<CalibrationFile>> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cal: CalibrationFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for c in cal.attributes.values() {
        c.validate().with_context(|| format!("{}: {:?}", path.display(), c.kind))?;
    }
    Ok(Some(cal))
}

fn similarity_backend(ctx: &Context, skip: bool) -> anyhow::Result<Option<Box<dyn EmbeddingBackend>>> {
    if skip {
        Ok(None)
    } else {
        ctx.embedder()
    }
}

fn write_report(ctx: &Context, stem: &str, report: &EvaluationReport) -> anyhow::Result<()> {
    write_file(&ctx.out.join(format!("{stem}.json")), &report.to_json())?;
    write_file(&ctx.out.join(format!("{stem}.md")), &report.to_markdown())?;
    write_file(&ctx.out.join(format!("{stem}_instances.csv")), &report.instances_csv())?;
    Ok(())
}

fn print_summary(report: &EvaluationReport) {
    eprint!("{}", report.to_markdown());
}

pub fn run_evaluate(ctx: &Context, args: &EvaluateArgs) -> anyhow::Result<()> {
    let (gold, gold_path) = load_gold_args(ctx, &args.gold)?;
    let predictions: Vec<CharacterPrediction> = read_jsonl(&args.predictions)?;
    let calibration = load_calibration(args.calibration.as_deref())?;
    let backend = similarity_backend(ctx, args.no_similarity)?;

    let mut inputs = vec![gold_path.as_path(), args.predictions.as_path()];
    inputs.extend(args.predictions_b.as_deref());
    inputs.extend(args.calibration.as_deref());
    let mut manifest = RunManifest::new("evaluate", ctx.config_snapshot(), &inputs, ctx.seed, !ctx.live(backend.is_some()))?;
    if let Some(b) = &backend {
        manifest.backends.insert("embedding".into(), b.identity());
    }
    let opts = EvaluateOptions {
        attributes: parse_attributes(&args.attributes)?,
        backend: backend.as_deref(),
        calibration: calibration.as_ref(),
        run_id: manifest.run_id.clone(),
    };
    let report = evaluate(&gold, &predictions, &opts).map_err(|e| Exit::data(e.to_string()))?;
    for id in &report.unmatched_gold {
        eprintln!("no prediction for gold character {id}");
    }
    for id in &report.unmatched_predictions {
        eprintln!("prediction for unknown character {id}");
    }
    write_report(ctx, "report", &report)?;
    print_summary(&report);
    if let Some(path_b) = &args.predictions_b {
        let preds_b: Vec<CharacterPrediction> = read_jsonl(path_b)?;
        let report_b = evaluate(&gold, &preds_b, &opts).map_err(|e| Exit::data(e.to_string()))?;
        write_report(ctx, "report_b", &report_b)?;
        write_file(&ctx.out.join("paired.csv"), &paired_csv(&report, &report_b))?;
    }
    manifest.write(&ctx.out)
}

pub fn run_baseline(ctx: &Context, args: &BaselineArgs) -> anyhow::Result<()> {
    let (gold, gold_path) = load_gold_args(ctx, &args.gold)?;
    let calibration = load_calibration(args.calibration.as_deref())?;
    let backend = similarity_backend(ctx, args.no_similarity)?;
    let mut inputs = vec![gold_path.as_path()];
    inputs.extend(args.calibration.as_deref());
    let deterministic = !ctx.live(backend.is_some());
    let manifest = RunManifest::new("baseline", ctx.config_snapshot(), &inputs, ctx.seed, deterministic)?;

    let baseline = majority_baseline(&gold).map_err(|e| Exit::data(e.to_string()))?;
    let provenance = Provenance {
        model_id: "majority-baseline".into(),
        template_version: String::new(),
        timestamp: timestamp(deterministic),
        run_id: manifest.run_id.clone(),
        generation: Default::default(),
    };
    let predictions: Vec<CharacterPrediction> = baseline
        .predictions(&gold)
        .into_iter()
        .map(|p| CharacterPrediction { provenance: provenance.clone(), ..p })
        .collect();
    write_jsonl(&ctx.out.join("baseline_predictions.jsonl"), &predictions)?;

    let coverage = coverage_stats(&gold);
    write_file(&ctx.out.join("coverage.json"), &(serde_json::to_string_pretty(&coverage)? + "\n"))?;
    eprint!("{coverage}");

    let opts = EvaluateOptions {
        attributes: AttributeKind::ALL.to_vec(),
        backend: backend.as_deref(),
        calibration: calibration.as_ref(),
        run_id: manifest.run_id.clone(),
    };
    let report = evaluate(&gold, &predictions, &opts).map_err(|e| Exit::data(e.to_string()))?;
    write_report(ctx, "baseline_report", &report)?;
    print_summary(&report);
    manifest.write(&ctx.out)
}

/// Attribute rows × system columns, using each attribute's headline metric.
pub fn comparison_table(names: &[String], reports: &[EvaluationReport]) -> String {
    let mut s = format!("| Attribute | Metric | {} |\n", names.join(" | "));
    s.push_str(&format!("|---|---|{}\n", "---:|".repeat(names.len())));
    let rows: [(AttributeKind, &str, fn(&crate::evaluate::AttributeResult) -> Option<f64>); 10] = [
        (AttributeKind::Gender, "weighted F1", |a| a.weighted_f1),
        (AttributeKind::Age, "weighted F1", |a| a.weighted_f1),
        (AttributeKind::Age, "soft F1", |a| a.soft_f1),
        (AttributeKind::Type, "weighted F1 (h./n-h.)", |a| a.weighted_f1),
        (AttributeKind::Type, "mHAS (n-h.)", |a| a.mhas),
        (AttributeKind::SpokenLanguages, "micro F1", |a| a.micro_f1),
        (AttributeKind::Origin, "mHAS", |a| a.mhas),
        (AttributeKind::Residence, "mHAS", |a| a.mhas),
        (AttributeKind::Occupation, "mHAS", |a| a.mhas),
        (AttributeKind::PhysicalHealth, "mHAS", |a| a.mhas),
    ];
    for (kind, label, get) in rows {
        let cells: Vec<String> = reports
            .iter()
            .map(|r| r.attribute(kind).and_then(get).map(|v| format!("{v:.3}")).unwrap_or_else(|| "–".into()))
            .collect();
        s.push_str(&format!("| {} | {label} | {} |\n", kind.label(), cells.join(" | ")));
    }
    s
}

pub fn run_report(ctx: &Context, args: &ReportArgs) -> anyhow::Result<()> {
    anyhow::ensure!(
        args.names.is_empty() || args.names.len() == args.inputs.len(),
        "--name must be given once per --input"
    );
    let mut reports = Vec::new();
    for p in &args.inputs {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        reports.push(serde_json::from_str::<EvaluationReport>(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    let names: Vec<String> = if args.names.is_empty() {
        args.inputs.iter().map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect()
    } else {
        args.names.clone()
    };
    let table = comparison_table(&names, &reports);
    write_file(&ctx.out.join("summary.md"), &table)?;
    print!("{table}");
    Ok(())
}
