//! Embedding-cosine scoring of open-class attributes and the two-stage Type
//! evaluation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::classification::{weighted_f1, F1Report};
use super::MetricError;
use crate::attribute::AttributeKind;
use crate::backends::EmbeddingBackend;
use crate::num::Scalar;

/// Version tag of the default instruction set, stored alongside fitted
/// calibrations.
pub const INSTRUCTION_SET_VERSION: &str = "similarity-instructions-v1";

/// Default embedding instruction for an open-class attribute.
pub fn default_instruction(kind: AttributeKind) -> Option<&'static str> {
    Some(match kind {
        AttributeKind::Origin => "Represent the geographic origin of a person for semantic comparison.",
        AttributeKind::Residence => "Represent the place where a person lives for semantic comparison.",
        AttributeKind::Occupation => "Represent the occupation of a person for semantic comparison.",
        AttributeKind::PhysicalHealth => "Represent the physical health condition of a person for semantic comparison.",
        AttributeKind::Type => "Represent the kind of entity a fictional character is for semantic comparison.",
        AttributeKind::Age | AttributeKind::Gender | AttributeKind::SpokenLanguages => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStatus {
    Scored,
    /// No prediction: cosine holds the −1 sentinel.
    MissingPrediction,
    /// "human" predicted for a non-human gold: cosine 0.
    HumanMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimilarityScore<T: Scalar = f64> {
    pub kind: AttributeKind,
    pub character_id: String,
    pub cosine: T,
    pub gold: String,
    pub pred: String,
    pub status: ScoreStatus,
}

/// Joint serialization of a value list.
pub fn serialize_values<S: AsRef<str>>(values: &[S]) -> String {
    values.iter().map(|s| s.as_ref().trim()).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(", ")
}

/// One instance to score: gold must be non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenClassItem {
    pub character_id: String,
    pub gold: Vec<String>,
    pub pred: Vec<String>,
}

/// Scores a batch of instances, embedding each distinct serialization once.
pub fn score_open_class<T: Scalar, B: EmbeddingBackend + ?Sized>(
    kind: AttributeKind,
    items: &[OpenClassItem],
    backend: &B,
    instruction: &str,
) -> Result<Vec<SimilarityScore<T>>, MetricError> {
    let mut texts: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |s: String| -> usize {
        *index.entry(s.clone()).or_insert_with(|| {
            texts.push(s);
            texts.len() - 1
        })
    };
    let mut plan = Vec::with_capacity(items.len());
    for it in items {
        let gold = serialize_values(&it.gold);
        if gold.is_empty() {
            return Err(MetricError::MissingGold(it.character_id.clone()));
        }
        let pred = serialize_values(&it.pred);
        let gi = intern(gold.clone());
        let pi = (!pred.is_empty()).then(|| intern(pred.clone()));
        plan.push((gold, pred, gi, pi));
    }
    let vectors = if texts.is_empty() {
        Vec::new()
    } else {
        backend.embed(instruction, &texts).map_err(|e| MetricError::Backend(e.to_string()))?
    };
    if vectors.len() != texts.len() {
        return Err(MetricError::Backend("embedding count mismatch".into()));
    }
    Ok(items
        .iter()
        .zip(plan)
        .map(|(it, (gold, pred, gi, pi))| {
            let (cosine, status) = match pi {
                Some(pi) => (T::lit(vectors[gi].cosine(&vectors[pi])), ScoreStatus::Scored),
                None => (-T::one(), ScoreStatus::MissingPrediction),
            };
            SimilarityScore { kind, character_id: it.character_id.clone(), cosine, gold, pred, status }
        })
        .collect())
}

pub fn open_class_similarity<T: Scalar, B: EmbeddingBackend + ?Sized>(
    kind: AttributeKind,
    character_id: &str,
    gold: &[String],
    pred: &[String],
    backend: &B,
    instruction: &str,
) -> Result<SimilarityScore<T>, MetricError> {
    let item = OpenClassItem { character_id: character_id.to_string(), gold: gold.to_vec(), pred: pred.to_vec() };
    Ok(score_open_class(kind, &[item], backend, instruction)?.remove(0))
}

pub fn is_human(value: &str) -> bool {
    value.trim().eq_ignore_ascii_case("human")
}

pub const HUMAN: &str = "human";
pub const NON_HUMAN: &str = "non-human";

#[derive(Debug, Clone, PartialEq)]
pub struct TypeItem {
    pub character_id: String,
    pub gold: String,
    pub pred: Option<String>,
}

/// Stage 1: weighted F1 on human/non-human. Stage 2 (when a backend is
/// given): similarity on every non-human gold, with a "human" prediction
/// scored 0.
pub fn evaluate_type_two_stage<T: Scalar, B: EmbeddingBackend + ?Sized>(
    items: &[TypeItem],
    backend: Option<&B>,
    instruction: &str,
) -> Result<(F1Report<T>, Vec<SimilarityScore<T>>), MetricError> {
    let bin = |v: &str| if is_human(v) { HUMAN } else { NON_HUMAN };
    let gold: Vec<&str> = items.iter().map(|i| bin(&i.gold)).collect();
    let pred: Vec<Option<&str>> = items.iter().map(|i| i.pred.as_deref().filter(|p| !p.trim().is_empty()).map(bin)).collect();
    let stage1 = weighted_f1(&gold, &pred)?;

    let Some(backend) = backend else { return Ok((stage1, Vec::new())) };
    let non_human: Vec<&TypeItem> = items.iter().filter(|i| !is_human(&i.gold)).collect();
    let to_embed: Vec<OpenClassItem> = non_human
        .iter()
        .filter(|i| !i.pred.as_deref().is_some_and(is_human))
        .map(|i| OpenClassItem {
            character_id: i.character_id.clone(),
            gold: vec![i.gold.clone()],
            pred: i.pred.iter().cloned().collect(),
        })
        .collect();
    let mut scored = score_open_class::<T, B>(AttributeKind::Type, &to_embed, backend, instruction)?.into_iter();
    let stage2 = non_human
        .iter()
        .map(|i| match i.pred.as_deref() {
            Some(p) if is_human(p) => SimilarityScore {
                kind: AttributeKind::Type,
                character_id: i.character_id.clone(),
                cosine: T::zero(),
                gold: i.gold.trim().to_string(),
                pred: p.trim().to_string(),
                status: ScoreStatus::HumanMismatch,
            },
            _ => scored.next().expect("one score per embedded item"),
        })
        .collect();
    Ok((stage1, stage2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockEmbeddingBackend;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_serializations_score_one() {
        let b = MockEmbeddingBackend::new(5, 64);
        let inst = default_instruction(AttributeKind::Origin).unwrap();
        let s: SimilarityScore = open_class_similarity(AttributeKind::Origin, "c", &strings(&["France", "Paris"]), &strings(&["France", "Paris"]), &b, inst).unwrap();
        assert!((s.cosine - 1.0).abs() < 1e-6);
        assert_eq!(s.gold, "France, Paris");
        assert_eq!(s.status, ScoreStatus::Scored);
    }

    #[test]
    fn missing_prediction_sentinel() {
        let b = MockEmbeddingBackend::new(5, 16);
        let s: SimilarityScore = open_class_similarity(AttributeKind::Occupation, "c", &strings(&["writer"]), &[], &b, "").unwrap();
        assert_eq!(s.cosine, -1.0);
        assert_eq!(s.status, ScoreStatus::MissingPrediction);
        assert!(open_class_similarity::<f64, _>(AttributeKind::Occupation, "c", &[], &strings(&["x"]), &b, "").is_err());
    }

    #[test]
    fn type_two_stage() {
        let b = MockEmbeddingBackend::new(1, 32);
        let item = |id: &str, g: &str, p: Option<&str>| TypeItem { character_id: id.into(), gold: g.into(), pred: p.map(String::from) };
        let all_human = [item("a", "human", Some("Human")), item("b", "human", Some("human"))];
        let (s1, s2) = evaluate_type_two_stage::<f64, _>(&all_human, Some(&b), "").unwrap();
        assert_eq!(s1.value, 1.0);
        assert!(s2.is_empty());

        let mixed = [item("a", "human", Some("human")), item("b", "cat", Some("human")), item("c", "horse", Some("horse")), item("d", "dog", None)];
        let (s1, s2) = evaluate_type_two_stage::<f64, _>(&mixed, Some(&b), "").unwrap();
        assert!(s1.value < 1.0);
        assert_eq!(s2.len(), 3);
        assert_eq!(s2[0].status, ScoreStatus::HumanMismatch);
        assert_eq!(s2[0].cosine, 0.0);
        assert!((s2[1].cosine - 1.0).abs() < 1e-6);
        assert_eq!(s2[2].status, ScoreStatus::MissingPrediction);

        let (_, none) = evaluate_type_two_stage::<f64, MockEmbeddingBackend>(&mixed, None, "").unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn instructions_cover_open_classes() {
        for kind in AttributeKind::OPEN_CLASS {
            assert!(default_instruction(kind).is_some());
        }
        assert!(default_instruction(AttributeKind::Gender).is_none());
    }
}
