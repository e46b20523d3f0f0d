//! Spearman rank correlation with two-sided p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MetricError;
use crate::num::Scalar;

/// Largest sample for which the exact permutation p-value is computed.
pub const EXACT_P_MAX_N: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CorrelationReport<T: Scalar = f64> {
    pub rho: T,
    /// Two-sided p from the t approximation with n − 2 degrees of freedom.
    pub p_value: T,
    /// Two-sided permutation p, for n ≤ [`EXACT_P_MAX_N`].
    pub p_exact: Option<T>,
    pub n: usize,
}

/// 1-based ranks, ties sharing the mean of their positions.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = T::count(i + j + 2) / T::lit(2.0);
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    let n = T::count(x.len());
    let mx = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    let my = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
        syy = syy + (b - my) * (b - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return None;
    }
    let r = sxy / (sxx * syy).sqrt();
    Some(r.max(-T::one()).min(T::one()))
}

pub fn spearman_rho<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationReport<T>, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n < 3 {
        return Err(MetricError::TooFewValues);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let rho = pearson(&rx, &ry).ok_or(MetricError::ZeroVariance)?;

    let r = rho.as_f64();
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    let p_exact = (n <= EXACT_P_MAX_N).then(|| T::lit(permutation_p(&rx, &ry, r)));
    Ok(CorrelationReport { rho, p_value: T::lit(p), p_exact, n })
}

/// Share of rank permutations of `ry` whose |ρ| reaches the observed one.
fn permutation_p<T: Scalar>(rx: &[T], ry: &[T], observed: f64) -> f64 {
    let rx: Vec<f64> = rx.iter().map(|v| v.as_f64()).collect();
    let mut perm: Vec<f64> = ry.iter().map(|v| v.as_f64()).collect();
    let threshold = observed.abs() - 1e-12;
    let (mut hits, mut total) = (0u64, 0u64);
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(&rx, p).is_some_and(|r| r.abs() >= threshold) {
            hits += 1;
        }
    };
    // Heap's algorithm, iterative.
    let n = perm.len();
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}
