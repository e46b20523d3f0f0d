//! Scores predictions against gold and assembles the evaluation report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attribute::AttributeKind;
use crate::backends::EmbeddingBackend;
use crate::dataset::{canonical_language, GoldRecord};
use crate::metrics::{
    apply_calibration, default_instruction, evaluate_type_two_stage, micro_f1_multilabel, score_open_class, soft_f1,
    weighted_f1, CalibrationFile, MetricError, OpenClassItem, ScoreStatus, SimilarityScore, TypeItem, WeightMatrix,
};
use crate::postprocess::CharacterPrediction;

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error("no character_id is shared by gold and predictions ({n_gold} gold, {n_pred} predictions)")]
    EmptyJoin { n_gold: usize, n_pred: usize },
    #[error("duplicate prediction for character {0}")]
    DuplicatePrediction(String),
    #[error("{kind:?}: {source}")]
    Metric {
        kind: AttributeKind,
        #[source]
        source: MetricError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeResult {
    pub kind: AttributeKind,
    /// Joined characters with gold present for this attribute.
    pub n: usize,
    pub n_missing_pred: usize,
    /// Age and Gender; binarized human/non-human for Type.
    pub weighted_f1: Option<f64>,
    pub soft_f1: Option<f64>,
    pub micro_f1: Option<f64>,
    /// Raw cosine over similarity-scored instances (non-human golds for Type).
    pub mean_cosine: Option<f64>,
    pub mhas: Option<f64>,
    pub n_similarity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

impl AttributeResult {
    fn new(kind: AttributeKind, n: usize, n_missing_pred: usize) -> Self {
        Self {
            kind,
            n,
            n_missing_pred,
            weighted_f1: None,
            soft_f1: None,
            micro_f1: None,
            mean_cosine: None,
            mhas: None,
            n_similarity: 0,
            instruction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub character_id: String,
    pub attribute: AttributeKind,
    pub gold: String,
    pub pred: String,
    pub cosine: f64,
    pub has: Option<f64>,
    pub status: ScoreStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub run_id: String,
    pub n_gold: usize,
    pub n_predictions: usize,
    pub n_joined: usize,
    pub unmatched_gold: Vec<String>,
    pub unmatched_predictions: Vec<String>,
    pub attributes: Vec<AttributeResult>,
    pub instances: Vec<InstanceScore>,
}

pub struct EvaluateOptions<'a> {
    pub attributes: Vec<AttributeKind>,
    /// Open-class similarity (and Type stage 2) only run with a backend.
    pub backend: Option<&'a dyn EmbeddingBackend>,
    pub calibration: Option<&'a CalibrationFile>,
    pub run_id: String,
}

impl Default for EvaluateOptions<'_> {
    fn default() -> Self {
        Self { attributes: AttributeKind::ALL.to_vec(), backend: None, calibration: None, run_id: String::new() }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn metric(kind: AttributeKind) -> impl FnOnce(MetricError) -> EvaluateError {
    move |source| EvaluateError::Metric { kind, source }
}

pub fn evaluate(
    gold: &[GoldRecord],
    predictions: &[CharacterPrediction],
    options: &EvaluateOptions<'_>,
) -> Result<EvaluationReport, EvaluateError> {
    let mut by_id: HashMap<&str, &CharacterPrediction> = HashMap::new();
    for p in predictions {
        if by_id.insert(p.character_id.as_str(), p).is_some() {
            return Err(EvaluateError::DuplicatePrediction(p.character_id.clone()));
        }
    }
    let gold_ids: HashSet<&str> = gold.iter().map(|g| g.character_id.as_str()).collect();
    let joined: Vec<(&GoldRecord, &CharacterPrediction)> =
        gold.iter().filter_map(|g| by_id.get(g.character_id.as_str()).map(|p| (g, *p))).collect();
    if joined.is_empty() {
        return Err(EvaluateError::EmptyJoin { n_gold: gold.len(), n_pred: predictions.len() });
    }
    let unmatched_gold = gold.iter().filter(|g| !by_id.contains_key(g.character_id.as_str())).map(|g| g.character_id.clone()).collect();
    let unmatched_predictions =
        predictions.iter().filter(|p| !gold_ids.contains(p.character_id.as_str())).map(|p| p.character_id.clone()).collect();

    let kinds: std::collections::BTreeSet<AttributeKind> = options.attributes.iter().copied().collect();
    let mut attributes = Vec::new();
    let mut instances = Vec::new();
    for kind in kinds {
        let rows: Vec<_> = joined.iter().filter(|(g, _)| g.is_filled(kind)).collect();
        let n_missing = rows.iter().filter(|(_, p)| p.values(kind).is_empty()).count();
        let mut result = AttributeResult::new(kind, rows.len(), n_missing);
        if rows.is_empty() {
            attributes.push(result);
            continue;
        }
        let calibration = options.calibration.and_then(|c| c.attributes.get(&kind));
        let instruction = calibration
            .map(|c| c.instruction.clone())
            .filter(|i| !i.is_empty())
            .or_else(|| default_instruction(kind).map(str::to_string));

        let mut scores: Vec<SimilarityScore<f64>> = Vec::new();
        match kind {
            AttributeKind::Age | AttributeKind::Gender => {
                let g: Vec<&str> = rows.iter().map(|(g, _)| g.scalar(kind).expect("filled")).collect();
                let p: Vec<Option<&str>> = rows.iter().map(|(_, p)| p.scalar(kind)).collect();
                result.weighted_f1 = Some(weighted_f1::<f64, _, _>(&g, &p).map_err(metric(kind))?.value);
                if kind == AttributeKind::Age {
                    result.soft_f1 = Some(soft_f1(&g, &p, &WeightMatrix::<f64>::age()).map_err(metric(kind))?.value);
                }
            }
            AttributeKind::SpokenLanguages => {
                let g: Vec<Vec<String>> = rows.iter().map(|(g, _)| g.spoken_languages.clone()).collect();
                let p: Vec<Vec<String>> =
                    rows.iter().map(|(_, p)| p.spoken_languages.iter().map(|l| canonical_language(l)).collect()).collect();
                result.micro_f1 = Some(micro_f1_multilabel::<f64, _, _>(&g, &p).map_err(metric(kind))?.value);
            }
            AttributeKind::Type => {
                let items: Vec<TypeItem> = rows
                    .iter()
                    .map(|(g, p)| TypeItem {
                        character_id: g.character_id.clone(),
                        gold: g.type_value.clone(),
                        pred: p.type_value.clone(),
                    })
                    .collect();
                let (stage1, stage2) =
                    evaluate_type_two_stage::<f64, dyn EmbeddingBackend>(&items, options.backend, instruction.as_deref().unwrap_or_default())
                        .map_err(metric(kind))?;
                result.weighted_f1 = Some(stage1.value);
                scores = stage2;
            }
            _ => {
                if let Some(backend) = options.backend {
                    let items: Vec<OpenClassItem> = rows
                        .iter()
                        .map(|(g, p)| OpenClassItem { character_id: g.character_id.clone(), gold: g.values(kind), pred: p.values(kind) })
                        .collect();
                    scores = score_open_class(kind, &items, backend, instruction.as_deref().unwrap_or_default())
                        .map_err(metric(kind))?;
                }
            }
        }

        if options.backend.is_some() && !scores.is_empty() {
            result.n_similarity = scores.len();
            result.mean_cosine = mean(scores.iter().map(|s| s.cosine));
            result.instruction = instruction;
            let has = match calibration {
                Some(cal) => {
                    let (values, m) = apply_calibration(cal, &scores).map_err(metric(kind))?;
                    result.mhas = Some(m);
                    values.into_iter().map(Some).collect()
                }
                None => vec![None; scores.len()],
            };
            for (s, h) in scores.into_iter().zip(has) {
                instances.push(InstanceScore {
                    character_id: s.character_id,
                    attribute: kind,
                    gold: s.gold,
                    pred: s.pred,
                    cosine: s.cosine,
                    has: h,
                    status: s.status,
                });
            }
        }
        attributes.push(result);
    }
    Ok(EvaluationReport {
        run_id: options.run_id.clone(),
        n_gold: gold.len(),
        n_predictions: predictions.len(),
        n_joined: joined.len(),
        unmatched_gold,
        unmatched_predictions,
        attributes,
        instances,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "–".into())
}

impl EvaluationReport {
    pub fn attribute(&self, kind: AttributeKind) -> Option<&AttributeResult> {
        self.attributes.iter().find(|a| a.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Evaluation {}\n", self.run_id);
        let _ = writeln!(s, "Joined {} of {} gold characters ({} predictions).\n", self.n_joined, self.n_gold, self.n_predictions);
        let _ = writeln!(s, "| Attribute | n | Weighted F1 | Soft F1 | Micro F1 | Mean cosine | mHAS |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|---:|");
        for a in &self.attributes {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                a.kind.label(),
                a.n,
                cell(a.weighted_f1),
                cell(a.soft_f1),
                cell(a.micro_f1),
                cell(a.mean_cosine),
                cell(a.mhas)
            );
        }
        if !self.unmatched_gold.is_empty() || !self.unmatched_predictions.is_empty() {
            let _ = writeln!(
                s,
                "\nUnmatched: {} gold without prediction, {} predictions without gold.",
                self.unmatched_gold.len(),
                self.unmatched_predictions.len()
            );
        }
        s
    }

    pub fn instances_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["character_id", "attribute", "gold", "pred", "cosine", "has", "status"]).expect("in-memory write");
        for i in &self.instances {
            w.serialize((
                &i.character_id,
                i.attribute.key(),
                &i.gold,
                &i.pred,
                i.cosine,
                i.has,
                status_name(i.status),
            ))
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

fn status_name(s: ScoreStatus) -> &'static str {
    match s {
        ScoreStatus::Scored => "scored",
        ScoreStatus::MissingPrediction => "missing_prediction",
        ScoreStatus::HumanMismatch => "human_mismatch",
    }
}

/// Per-instance comparison of two systems evaluated on the same gold: one
/// row per (character, attribute) scored in `a`, in `a`'s order.
pub fn paired_csv(a: &EvaluationReport, b: &EvaluationReport) -> String {
    let index: BTreeMap<(&str, AttributeKind), &InstanceScore> =
        b.instances.iter().map(|i| ((i.character_id.as_str(), i.attribute), i)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["character_id", "attribute", "gold", "pred_a", "pred_b", "cosine_a", "cosine_b", "has_a", "has_b"])
        .expect("in-memory write");
    for i in &a.instances {
        let other = index.get(&(i.character_id.as_str(), i.attribute));
        w.serialize((
            &i.character_id,
            i.attribute.key(),
            &i.gold,
            &i.pred,
            other.map(|o| o.pred.as_str()),
            i.cosine,
            other.map(|o| o.cosine),
            i.has,
            other.and_then(|o| o.has),
        ))
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Gold re-expressed as predictions, for self-evaluation.
pub fn gold_as_predictions(gold: &[GoldRecord]) -> Vec<CharacterPrediction> {
    gold.iter()
        .map(|g| CharacterPrediction {
            character_id: g.character_id.clone(),
            age: g.age,
            gender: g.gender.map(|x| x.as_str().to_string()),
            origin: g.origin.clone(),
            residence: g.residence.clone(),
            spoken_languages: g.spoken_languages.clone(),
            type_value: Some(g.type_value.clone()),
            occupation: g.occupation.clone(),
            physical_health: g.physical_health.clone(),
            ..Default::default()
        })
        .collect()
}
