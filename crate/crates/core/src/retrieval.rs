//! Attribute-specific passage retrieval.
//!
//! Each attribute gets its own query; queries and passages are embedded under
//! a shared instruction, ranked by cosine similarity and cut to the top `k`.
//! The per-attribute lists are then merged with duplicates removed, giving
//! the passage list shown to the model.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribute::AttributeKind;
use crate::backends::{BackendError, EmbeddingBackend, EmbeddingVector};
use crate::corpus::{Passage, DEFAULT_WINDOW_WORDS};

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_GENERAL_INSTRUCTION: &str =
    "Given a question about a fictional character, retrieve passages from the novel that answer it.";

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("no passages to score for {kind}")]
    NoPassages { kind: AttributeKind },
    #[error("embedding backend failed while scoring {kind}: {source}")]
    Backend {
        kind: AttributeKind,
        #[source]
        source: BackendError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeQuery {
    pub kind: AttributeKind,
    pub text: String,
}

/// Renders the retrieval query for an attribute.
pub fn render_query(kind: AttributeKind, character_name: &str) -> AttributeQuery {
    let n = character_name;
    let text = match kind {
        AttributeKind::Age => format!("Is {n} a child, a teenager, an adult, or a senior?"),
        AttributeKind::Gender => format!("Is {n} male or female?"),
        AttributeKind::Origin => format!("Where is {n} from?"),
        AttributeKind::Residence => format!("Where does {n} live?"),
        AttributeKind::SpokenLanguages => format!("What languages does {n} speak?"),
        AttributeKind::Type => format!("What type of entity is {n}?"),
        AttributeKind::Occupation => format!("What is {n}'s occupation?"),
        AttributeKind::PhysicalHealth => format!("How is {n}'s health condition?"),
    };
    AttributeQuery { kind, text }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k: usize,
    /// Instruction used when embedding queries.
    pub general_instruction: String,
    /// Instruction used when embedding passages. Defaults to the query
    /// instruction; set it to the empty string for encoders that embed
    /// documents without an instruction.
    pub passage_instruction: String,
    pub window_words: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            general_instruction: DEFAULT_GENERAL_INSTRUCTION.to_string(),
            passage_instruction: DEFAULT_GENERAL_INSTRUCTION.to_string(),
            window_words: DEFAULT_WINDOW_WORDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub start_word: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSelection {
    pub per_attribute: BTreeMap<AttributeKind, Vec<ScoredPassage>>,
    /// Passage ids in attribute order then rank order, first occurrence kept.
    pub merged: Vec<String>,
}

impl RetrievalSelection {
    pub fn empty() -> Self {
        Self { per_attribute: BTreeMap::new(), merged: Vec::new() }
    }
}

/// Embedding cache keyed by a hash of (instruction, text), shared across the
/// characters of one run.
pub struct CachedEmbedder<B> {
    inner: B,
    cache: Mutex<HashMap<[u8; 32], EmbeddingVector>>,
}

impl<B: EmbeddingBackend> CachedEmbedder<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    fn key(instruction: &str, text: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((instruction.len() as u64).to_le_bytes());
        h.update(instruction.as_bytes());
        h.update(text.as_bytes());
        h.finalize().into()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: EmbeddingBackend> EmbeddingBackend for CachedEmbedder<B> {
    fn embed(&self, instruction: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        let keys: Vec<_> = texts.iter().map(|t| Self::key(instruction, t)).collect();
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !cache.contains_key(*k) && seen.insert(**k))
                .map(|(t, _)| t.clone())
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed(instruction, &missing)?;
            if fresh.len() != missing.len() {
                return Err(BackendError::Protocol(format!(
                    "backend returned {} vectors for {} texts",
                    fresh.len(),
                    missing.len()
                )));
            }
            let mut cache = self.cache.lock().expect("cache lock");
            for (t, v) in missing.iter().zip(fresh) {
                cache.insert(Self::key(instruction, t), v);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}

/// Scores every passage against the query, highest cosine first. Ties are
/// broken by passage position, then id, so the order is total.
pub fn score_passages<B: EmbeddingBackend + ?Sized>(
    query: &AttributeQuery,
    passages: &[Passage],
    backend: &B,
    config: &RetrievalConfig,
) -> Result<Vec<ScoredPassage>, RetrievalError> {
    if passages.is_empty() {
        return Err(RetrievalError::NoPassages { kind: query.kind });
    }
    let wrap = |source| RetrievalError::Backend { kind: query.kind, source };
    let q = backend
        .embed(&config.general_instruction, std::slice::from_ref(&query.text))
        .map_err(wrap)?
        .pop()
        .ok_or_else(|| wrap(BackendError::Protocol("no query embedding returned".into())))?;
    let texts: Vec<String> = passages.iter().map(|p| p.text.clone()).collect();
    let vecs = backend.embed(&config.passage_instruction, &texts).map_err(wrap)?;
    if vecs.len() != passages.len() {
        return Err(wrap(BackendError::Protocol("passage embedding count mismatch".into())));
    }
    let mut scored: Vec<ScoredPassage> = passages
        .iter()
        .zip(&vecs)
        .map(|(p, v)| ScoredPassage { passage_id: p.passage_id.clone(), start_word: p.start_word, score: q.cosine(v) })
        .collect();
    sort_scored(&mut scored);
    Ok(scored)
}

pub(crate) fn sort_scored(scored: &mut [ScoredPassage]) {
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.start_word.cmp(&b.start_word))
            .then(a.passage_id.cmp(&b.passage_id))
    });
}

/// Keeps the top `k` of each (already sorted) list and merges them in
/// attribute order, dropping passages already taken by an earlier attribute.
pub fn select_top(scored: &BTreeMap<AttributeKind, Vec<ScoredPassage>>, config: &RetrievalConfig) -> RetrievalSelection {
    assert!(config.k >= 1, "k must be at least 1");
    let mut per_attribute = BTreeMap::new();
    let mut merged = Vec::new();
    let mut seen = HashSet::new();
    for (&kind, list) in scored {
        let top: Vec<ScoredPassage> = list.iter().take(config.k).cloned().collect();
        for p in &top {
            if seen.insert(p.passage_id.clone()) {
                merged.push(p.passage_id.clone());
            }
        }
        per_attribute.insert(kind, top);
    }
    RetrievalSelection { per_attribute, merged }
}

/// Runs query rendering, scoring and selection for the requested attributes.
/// A character without passages yields an empty selection.
pub fn retrieve<B: EmbeddingBackend + ?Sized>(
    character_name: &str,
    passages: &[Passage],
    attributes: &[AttributeKind],
    backend: &B,
    config: &RetrievalConfig,
) -> Result<RetrievalSelection, RetrievalError> {
    if passages.is_empty() {
        return Ok(RetrievalSelection::empty());
    }
    let mut scored = BTreeMap::new();
    for &kind in attributes {
        let query = render_query(kind, character_name);
        scored.insert(kind, score_passages(&query, passages, backend, config)?);
    }
    Ok(select_top(&scored, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockEmbeddingBackend;

    fn passage(id: &str, start: usize, text: &str) -> Passage {
        Passage {
            passage_id: id.into(),
            book_id: "b".into(),
            character_id: "c".into(),
            start_word: start,
            end_word: start + 1,
            text: text.into(),
        }
    }

    #[test]
    fn query_templates() {
        assert_eq!(
            render_query(AttributeKind::Age, "Elizabeth").text,
            "Is Elizabeth a child, a teenager, an adult, or a senior?"
        );
        assert_eq!(render_query(AttributeKind::Occupation, "Ahab").text, "What is Ahab's occupation?");
        for kind in AttributeKind::ALL {
            let x = render_query(kind, "X").text;
            let y = render_query(kind, "Y").text;
            assert_eq!(x.replace('X', "Y"), y);
            assert!(x.contains('X'));
        }
    }

    /// Serves fixed vectors keyed by the exact text.
    struct FixedBackend(HashMap<String, Vec<f64>>);

    impl EmbeddingBackend for FixedBackend {
        fn embed(&self, _i: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
            Ok(texts.iter().map(|t| EmbeddingVector::normalized(self.0[t].clone()).unwrap()).collect())
        }
        fn identity(&self) -> String {
            "fixed".into()
        }
    }

    #[test]
    fn ordering_matches_brute_force_dot_products() {
        let q = vec![1.0, 0.0, 0.0];
        let vs = [("p0", vec![0.6, 0.8, 0.0]), ("p1", vec![0.0, 0.0, 1.0]), ("p2", vec![0.96, 0.28, 0.0])];
        let mut map: HashMap<String, Vec<f64>> = vs.iter().map(|(id, v)| (format!("text {id}"), v.clone())).collect();
        let query = render_query(AttributeKind::Age, "Q");
        map.insert(query.text.clone(), q.clone());
        let passages: Vec<_> = vs.iter().enumerate().map(|(i, (id, _))| passage(id, i, &format!("text {id}"))).collect();
        let got = score_passages(&query, &passages, &FixedBackend(map), &RetrievalConfig::default()).unwrap();

        let mut oracle: Vec<(f64, &str)> =
            vs.iter().map(|(id, v)| (v.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>(), *id)).collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let ids: Vec<_> = got.iter().map(|s| s.passage_id.as_str()).collect();
        assert_eq!(ids, oracle.iter().map(|o| o.1).collect::<Vec<_>>());
        for (s, o) in got.iter().zip(&oracle) {
            assert!((s.score - o.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_text_scores_one() {
        let query = render_query(AttributeKind::Gender, "Jo");
        let passages = [passage("a", 0, &query.text), passage("b", 5, "something else entirely")];
        let cfg = RetrievalConfig { passage_instruction: DEFAULT_GENERAL_INSTRUCTION.into(), ..Default::default() };
        let got = score_passages(&query, &passages, &MockEmbeddingBackend::new(1, 64), &cfg).unwrap();
        assert_eq!(got[0].passage_id, "a");
        assert!((got[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_passages_rejected() {
        let q = render_query(AttributeKind::Age, "X");
        let err = score_passages(&q, &[], &MockEmbeddingBackend::new(1, 8), &RetrievalConfig::default()).unwrap_err();
        assert!(matches!(err, RetrievalError::NoPassages { kind: AttributeKind::Age }));
    }

    #[test]
    fn ties_break_by_position_and_permutation_invariant() {
        let query = render_query(AttributeKind::Age, "X");
        let mut passages = vec![passage("late", 90, "same words"), passage("early", 10, "same words"), passage("mid", 50, "other")];
        let backend = MockEmbeddingBackend::new(4, 32);
        let cfg = RetrievalConfig::default();
        let a = score_passages(&query, &passages, &backend, &cfg).unwrap();
        passages.reverse();
        let b = score_passages(&query, &passages, &backend, &cfg).unwrap();
        assert_eq!(a, b);
        let pos_early = a.iter().position(|s| s.passage_id == "early").unwrap();
        let pos_late = a.iter().position(|s| s.passage_id == "late").unwrap();
        assert_eq!(pos_late, pos_early + 1);
    }

    fn sp(id: &str, score: f64) -> ScoredPassage {
        ScoredPassage { passage_id: id.into(), start_word: 0, score }
    }

    #[test]
    fn select_fewer_than_k() {
        let mut m = BTreeMap::new();
        m.insert(AttributeKind::Age, vec![sp("a", 0.9), sp("b", 0.5), sp("c", 0.2), sp("d", 0.1)]);
        let s = select_top(&m, &RetrievalConfig::default());
        assert_eq!(s.per_attribute[&AttributeKind::Age].len(), 4);
        assert_eq!(s.merged, ["a", "b", "c", "d"]);
    }

    #[test]
    fn select_truncates_and_dedups() {
        let mut m = BTreeMap::new();
        m.insert(AttributeKind::Gender, vec![sp("shared", 0.9), sp("g2", 0.8), sp("g3", 0.7)]);
        m.insert(AttributeKind::Age, vec![sp("shared", 0.95), sp("a2", 0.4)]);
        let cfg = RetrievalConfig { k: 2, ..Default::default() };
        let s = select_top(&m, &cfg);
        let g: Vec<_> = s.per_attribute[&AttributeKind::Gender].iter().map(|p| p.passage_id.as_str()).collect();
        assert_eq!(g, ["shared", "g2"]);
        // Age precedes Gender in enumeration order.
        assert_eq!(s.merged, ["shared", "a2", "g2"]);
    }

    #[test]
    fn cache_returns_same_vectors() {
        let cached = CachedEmbedder::new(MockEmbeddingBackend::new(2, 16));
        let texts = vec!["x".to_string(), "y".to_string(), "x".to_string()];
        let a = cached.embed("i", &texts).unwrap();
        let b = cached.inner().embed("i", &texts).unwrap();
        assert_eq!(a, b);
    }
}
