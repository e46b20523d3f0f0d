//! Human-aligned scores: isotonic maps from cosine similarity onto the
//! human judgment scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::similarity::{ScoreStatus, SimilarityScore};
use super::MetricError;
use crate::attribute::AttributeKind;
use crate::num::{clamp, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HasCalibration<T: Scalar = f64> {
    pub kind: AttributeKind,
    /// Embedding instruction the similarities were computed under.
    #[serde(default)]
    pub instruction: String,
    /// `(x, y)` with x strictly increasing and y non-decreasing in [0, 1].
    pub breakpoints: Vec<(T, T)>,
    pub fitted_on: usize,
}

/// Calibration file: one entry per attribute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibrationFile<T: Scalar = f64> {
    #[serde(default)]
    pub run_id: String,
    pub attributes: BTreeMap<AttributeKind, HasCalibration<T>>,
}

struct Block<T> {
    x_first: T,
    x_last: T,
    sum: T,
    weight: T,
}

impl<T: Scalar> Block<T> {
    fn mean(&self) -> T {
        self.sum / self.weight
    }
}

/// Weighted pool-adjacent-violators over points already sorted by x.
/// Returns the pooled blocks, means non-decreasing.
fn pava<T: Scalar>(points: &[(T, T, T)]) -> Vec<Block<T>> {
    let mut blocks: Vec<Block<T>> = Vec::with_capacity(points.len());
    for &(x, y, w) in points {
        blocks.push(Block { x_first: x, x_last: x, sum: y * w, weight: w });
        while blocks.len() >= 2 && blocks[blocks.len() - 2].mean() > blocks[blocks.len() - 1].mean() {
            let last = blocks.pop().expect("len >= 2");
            let prev = blocks.last_mut().expect("len >= 1");
            prev.x_last = last.x_last;
            prev.sum = prev.sum + last.sum;
            prev.weight = prev.weight + last.weight;
        }
    }
    blocks
}

/// Least-squares non-decreasing fit of human score on similarity.
pub fn fit_isotonic<T: Scalar>(kind: AttributeKind, pairs: &[(T, T)]) -> Result<HasCalibration<T>, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    for &(x, y) in pairs {
        if !x.is_finite() || !y.is_finite() {
            return Err(MetricError::NonFinite);
        }
        if y < T::zero() || y > T::one() {
            return Err(MetricError::InvalidScore(y.as_f64()));
        }
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    // Average equal-x points first; they enter PAVA with their multiplicity.
    let mut points: Vec<(T, T, T)> = Vec::new();
    for (x, y) in sorted {
        match points.last_mut() {
            Some(p) if p.0 == x => {
                p.1 = p.1 + y;
                p.2 = p.2 + T::one();
            }
            _ => points.push((x, y, T::one())),
        }
    }
    for p in &mut points {
        p.1 = p.1 / p.2;
    }

    let mut breakpoints = Vec::new();
    for b in pava(&points) {
        let y = clamp(b.mean(), T::zero(), T::one());
        breakpoints.push((b.x_first, y));
        if b.x_last != b.x_first {
            breakpoints.push((b.x_last, y));
        }
    }
    Ok(HasCalibration { kind, instruction: String::new(), breakpoints, fitted_on: pairs.len() })
}

impl<T: Scalar> HasCalibration<T> {
    /// Piecewise-linear interpolation, clamped outside the fitted range.
    pub fn eval(&self, x: T) -> T {
        let bp = &self.breakpoints;
        let (first, last) = (bp[0], bp[bp.len() - 1]);
        if x <= first.0 {
            return first.1;
        }
        if x >= last.0 {
            return last.1;
        }
        let k = bp.partition_point(|p| p.0 <= x);
        let (x0, y0) = bp[k - 1];
        let (x1, y1) = bp[k];
        if x == x0 {
            return y0;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Checks the breakpoint invariants (useful after loading from disk).
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.breakpoints.is_empty() {
            return Err(MetricError::Empty);
        }
        for w in self.breakpoints.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 < w[0].1 {
                return Err(MetricError::InvalidCalibration);
            }
        }
        if self.breakpoints.iter().any(|p| p.1 < T::zero() || p.1 > T::one()) {
            return Err(MetricError::InvalidCalibration);
        }
        Ok(())
    }
}

/// Maps similarity scores to HAS. Missing predictions and human/non-human
/// confusions score 0 regardless of the curve.
pub fn apply_calibration<T: Scalar>(cal: &HasCalibration<T>, scores: &[SimilarityScore<T>]) -> Result<(Vec<T>, T), MetricError> {
    cal.validate()?;
    let mut out = Vec::with_capacity(scores.len());
    for s in scores {
        if s.kind != cal.kind {
            return Err(MetricError::KindMismatch { expected: cal.kind, got: s.kind });
        }
        out.push(match s.status {
            ScoreStatus::Scored => cal.eval(s.cosine),
            ScoreStatus::MissingPrediction | ScoreStatus::HumanMismatch => T::zero(),
        });
    }
    let mean = if out.is_empty() { T::zero() } else { out.iter().fold(T::zero(), |a, &v| a + v) / T::count(out.len()) };
    Ok((out, mean))
}
