//! F1 variants for closed and semi-closed attributes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::attribute::AgeCategory;
use crate::num::{harmonic, safe_div, Scalar};

/// Label standing in for a missing prediction. It never matches gold.
pub const MISSING_CLASS: &str = "<none>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Weighted,
    Micro,
    SoftMicro,
    SoftWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassScore<T: Scalar = f64> {
    pub class: String,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct F1Report<T: Scalar = f64> {
    pub mode: Aggregation,
    pub value: T,
    pub n: usize,
    pub per_class: Vec<ClassScore<T>>,
}

/// Pairwise credit between classes: 1 on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct WeightMatrix<T: Scalar = f64> {
    classes: Vec<String>,
    weights: Vec<Vec<T>>,
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn new(classes: Vec<String>, weights: Vec<Vec<T>>) -> Result<Self, MetricError> {
        let n = classes.len();
        let bad = |why: &str| Err(MetricError::InvalidWeights(why.to_string()));
        if weights.len() != n || weights.iter().any(|r| r.len() != n) {
            return bad("matrix is not square over the class list");
        }
        for i in 0..n {
            if weights[i][i] != T::one() {
                return bad("diagonal must be 1");
            }
            for j in 0..n {
                let w = weights[i][j];
                if !(w >= T::zero() && w <= T::one()) || w != weights[j][i] {
                    return bad("weights must be symmetric and within [0, 1]");
                }
            }
        }
        let unique: BTreeSet<&String> = classes.iter().collect();
        if unique.len() != n {
            return bad("duplicate class");
        }
        Ok(Self { classes, weights })
    }

    pub fn identity(classes: &[&str]) -> Self {
        let n = classes.len();
        let weights = (0..n).map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect();
        Self::new(classes.iter().map(|c| c.to_string()).collect(), weights).expect("identity is valid")
    }

    /// Ordered classes with `adjacent` credit one step apart, zero beyond.
    pub fn ordinal(classes: &[&str], adjacent: T) -> Self {
        let n = classes.len();
        let weights = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match i.abs_diff(j) {
                        0 => T::one(),
                        1 => adjacent,
                        _ => T::zero(),
                    })
                    .collect()
            })
            .collect();
        Self::new(classes.iter().map(|c| c.to_string()).collect(), weights).expect("ordinal matrix is valid")
    }

    /// The age matrix: 1 exact, 0.8 adjacent, 0 otherwise.
    pub fn age() -> Self {
        let names: Vec<&str> = AgeCategory::ALL.iter().map(|c| c.as_str()).collect();
        Self::ordinal(&names, T::lit(0.8))
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    fn index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    /// Credit for a (gold, pred) pair. A missing prediction earns nothing.
    pub fn weight(&self, gold: &str, pred: Option<&str>) -> Result<T, MetricError> {
        let g = self.index(gold).ok_or_else(|| MetricError::UnknownLabel(gold.to_string()))?;
        let Some(pred) = pred else { return Ok(T::zero()) };
        let p = self.index(pred).ok_or_else(|| MetricError::UnknownLabel(pred.to_string()))?;
        Ok(self.weights[g][p])
    }

    pub(crate) fn weight_idx(&self, i: usize, j: usize) -> T {
        self.weights[i][j]
    }
}

fn check_lengths(g: usize, p: usize) -> Result<(), MetricError> {
    if g != p {
        return Err(MetricError::LengthMismatch { left: g, right: p });
    }
    if g == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn pred_label<P: AsRef<str>>(p: &Option<P>) -> &str {
    p.as_ref().map_or(MISSING_CLASS, |s| s.as_ref())
}

/// Support-weighted mean of one-vs-rest F1.
pub fn weighted_f1<T: Scalar, G: AsRef<str>, P: AsRef<str>>(gold: &[G], pred: &[Option<P>]) -> Result<F1Report<T>, MetricError> {
    check_lengths(gold.len(), pred.len())?;
    // Exact matches are the soft construction with an identity matrix.
    soft_counts(gold, pred, |g, p| if g == p { T::one() } else { T::zero() }, Aggregation::Weighted)
}

/// Per-class soft counts: credit `w(g, p)` accrues to the gold class'
/// recall numerator and the predicted class' precision numerator.
fn soft_counts<T: Scalar, G: AsRef<str>, P: AsRef<str>>(
    gold: &[G],
    pred: &[Option<P>],
    credit: impl Fn(&str, &str) -> T,
    mode: Aggregation,
) -> Result<F1Report<T>, MetricError> {
    let mut classes: BTreeMap<&str, (T, T, usize, usize)> = BTreeMap::new(); // (rec_num, prec_num, support, predicted)
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), pred_label(p));
        let w = if p == MISSING_CLASS { T::zero() } else { credit(g, p) };
        let e = classes.entry(g).or_insert((T::zero(), T::zero(), 0, 0));
        e.0 = e.0 + w;
        e.2 += 1;
        let e = classes.entry(p).or_insert((T::zero(), T::zero(), 0, 0));
        e.1 = e.1 + w;
        e.3 += 1;
    }
    let n = gold.len();
    let mut value = T::zero();
    let per_class = classes
        .into_iter()
        .map(|(class, (rec_num, prec_num, support, predicted))| {
            let recall = safe_div(rec_num, T::count(support));
            let precision = safe_div(prec_num, T::count(predicted));
            let f1 = harmonic(precision, recall);
            value = value + f1 * T::count(support) / T::count(n);
            ClassScore { class: class.to_string(), precision, recall, f1, support }
        })
        .collect();
    Ok(F1Report { mode, value, n, per_class })
}

/// Soft F1 in its micro form: mean pairwise credit over instances.
///
/// With exactly one (possibly missing) prediction per instance, micro soft
/// precision and recall share the denominator `n`, so both equal the mean
/// credit. Per-class entries come from the support-weighted construction.
pub fn soft_f1<T: Scalar, G: AsRef<str>, P: AsRef<str>>(
    gold: &[G],
    pred: &[Option<P>],
    weights: &WeightMatrix<T>,
) -> Result<F1Report<T>, MetricError> {
    let mut report = soft_f1_weighted(gold, pred, weights)?;
    let mut total = T::zero();
    for (g, p) in gold.iter().zip(pred) {
        total = total + weights.weight(g.as_ref(), p.as_ref().map(AsRef::as_ref))?;
    }
    report.value = total / T::count(gold.len());
    report.mode = Aggregation::SoftMicro;
    Ok(report)
}

/// Soft F1 aggregated like weighted F1 over per-class soft scores. Equals
/// [`weighted_f1`] under an identity matrix.
pub fn soft_f1_weighted<T: Scalar, G: AsRef<str>, P: AsRef<str>>(
    gold: &[G],
    pred: &[Option<P>],
    weights: &WeightMatrix<T>,
) -> Result<F1Report<T>, MetricError> {
    check_lengths(gold.len(), pred.len())?;
    for (g, p) in gold.iter().zip(pred) {
        weights.weight(g.as_ref(), p.as_ref().map(AsRef::as_ref))?;
    }
    soft_counts(
        gold,
        pred,
        |g, p| weights.weight(g, Some(p)).expect("labels validated"),
        Aggregation::SoftWeighted,
    )
}

fn canonical_set<S: AsRef<str>>(items: &[S]) -> BTreeSet<String> {
    items.iter().map(|s| s.as_ref().trim().to_lowercase()).filter(|s| !s.is_empty()).collect()
}

/// Micro F1 over binarized label sets.
pub fn micro_f1_multilabel<T: Scalar, G: AsRef<str>, P: AsRef<str>>(
    gold_sets: &[Vec<G>],
    pred_sets: &[Vec<P>],
) -> Result<F1Report<T>, MetricError> {
    if gold_sets.len() != pred_sets.len() {
        return Err(MetricError::LengthMismatch { left: gold_sets.len(), right: pred_sets.len() });
    }
    let mut per: HashMap<String, (usize, usize, usize)> = HashMap::new(); // tp, fp, fn
    for (g, p) in gold_sets.iter().zip(pred_sets) {
        let (g, p) = (canonical_set(g), canonical_set(p));
        for l in g.union(&p) {
            let e = per.entry(l.clone()).or_default();
            match (g.contains(l), p.contains(l)) {
                (true, true) => e.0 += 1,
                (false, true) => e.1 += 1,
                (true, false) => e.2 += 1,
                (false, false) => unreachable!(),
            }
        }
    }
    let (tp, fp, fnn) = per.values().fold((0, 0, 0), |a, e| (a.0 + e.0, a.1 + e.1, a.2 + e.2));
    let precision = safe_div(T::count(tp), T::count(tp + fp));
    let recall = safe_div(T::count(tp), T::count(tp + fnn));
    let mut per_class: Vec<ClassScore<T>> = per
        .into_iter()
        .map(|(class, (tp, fp, fnn))| {
            let p = safe_div(T::count(tp), T::count(tp + fp));
            let r = safe_div(T::count(tp), T::count(tp + fnn));
            ClassScore { class, precision: p, recall: r, f1: harmonic(p, r), support: tp + fnn }
        })
        .collect();
    per_class.sort_by(|a, b| a.class.cmp(&b.class));
    Ok(F1Report { mode: Aggregation::Micro, value: harmonic(precision, recall), n: gold_sets.len(), per_class })
}
