//! Inter-annotator agreement: Cohen's κ (plain and weighted) and interval
//! Krippendorff's α.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::classification::WeightMatrix;
use super::MetricError;
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AgreementReport<T: Scalar = f64> {
    pub kappa: T,
    pub soft_kappa: Option<T>,
    pub krippendorff_alpha: Option<T>,
    pub n_items: usize,
}

/// Cohen's κ between two annotators. With `weights`, agreement is credited
/// through the matrix: κ_w = (p_o − p_e) / (1 − p_e).
///
/// When chance agreement is total (both annotators used one and the same
/// label) κ is reported as 1.
pub fn cohen_kappa<T: Scalar, A: AsRef<str>, B: AsRef<str>>(
    a: &[A],
    b: &[B],
    weights: Option<&WeightMatrix<T>>,
) -> Result<T, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    // Category index: the matrix's classes, or the union of labels seen.
    let classes: Vec<String> = match weights {
        Some(w) => w.classes().to_vec(),
        None => {
            let mut all: Vec<String> = a.iter().map(|s| s.as_ref().to_string()).chain(b.iter().map(|s| s.as_ref().to_string())).collect();
            all.sort();
            all.dedup();
            all
        }
    };
    let idx: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let lookup = |s: &str| idx.get(s).copied().ok_or_else(|| MetricError::UnknownLabel(s.to_string()));
    let w = |i: usize, j: usize| match weights {
        Some(m) => m.weight_idx(i, j),
        None if i == j => T::one(),
        None => T::zero(),
    };

    let k = classes.len();
    let n = T::count(a.len());
    let mut ma = vec![T::zero(); k];
    let mut mb = vec![T::zero(); k];
    let mut po = T::zero();
    for (x, y) in a.iter().zip(b) {
        let (i, j) = (lookup(x.as_ref())?, lookup(y.as_ref())?);
        ma[i] = ma[i] + T::one();
        mb[j] = mb[j] + T::one();
        po = po + w(i, j);
    }
    po = po / n;
    let mut pe = T::zero();
    for i in 0..k {
        for j in 0..k {
            pe = pe + (ma[i] / n) * (mb[j] / n) * w(i, j);
        }
    }
    if pe >= T::one() {
        return Ok(if po >= T::one() { T::one() } else { T::zero() });
    }
    Ok((po - pe) / (T::one() - pe))
}

/// Interval Krippendorff's α over an items × annotators grid. Items with
/// fewer than two judgments are not pairable and are skipped.
///
/// If every pairable value is identical (no expected disagreement) α is 1.
pub fn krippendorff_alpha_interval<T: Scalar>(grid: &[Vec<Option<T>>]) -> Result<T, MetricError> {
    let units: Vec<Vec<T>> = grid
        .iter()
        .map(|row| row.iter().flatten().copied().collect::<Vec<T>>())
        .filter(|v| v.len() >= 2)
        .collect();
    let n: usize = units.iter().map(Vec::len).sum();
    if n < 2 {
        return Err(MetricError::TooFewValues);
    }
    let sq = |x: T, y: T| (x - y) * (x - y);

    // Observed: within-unit pairs, each unit weighted by 1 / (m_u − 1).
    let mut d_o = T::zero();
    for u in &units {
        let mut s = T::zero();
        for (i, &x) in u.iter().enumerate() {
            for (j, &y) in u.iter().enumerate() {
                if i != j {
                    s = s + sq(x, y);
                }
            }
        }
        d_o = d_o + s / T::count(u.len() - 1);
    }
    d_o = d_o / T::count(n);

    // Expected: all ordered pairs of pairable values.
    let all: Vec<T> = units.iter().flatten().copied().collect();
    let mut d_e = T::zero();
    for (i, &x) in all.iter().enumerate() {
        for (j, &y) in all.iter().enumerate() {
            if i != j {
                d_e = d_e + sq(x, y);
            }
        }
    }
    d_e = d_e / T::count(n * (n - 1));

    if d_e == T::zero() {
        return Ok(T::one());
    }
    Ok(T::one() - d_o / d_e)
}
