//! Evaluation metrics: closed-class F1 variants, open-class similarity,
//! human-aligned calibration, agreement and correlation statistics.
//!
//! Everything is generic over [`Scalar`](crate::num::Scalar); the crate root
//! re-exports `f64` aliases.

pub mod agreement;
pub mod calibration;
pub mod classification;
pub mod correlation;
pub mod similarity;

pub use agreement::{cohen_kappa, krippendorff_alpha_interval, AgreementReport};
pub use calibration::{apply_calibration, fit_isotonic, CalibrationFile, HasCalibration};
pub use classification::{
    micro_f1_multilabel, soft_f1, soft_f1_weighted, weighted_f1, Aggregation, ClassScore, F1Report, WeightMatrix,
    MISSING_CLASS,
};
pub use correlation::{average_ranks, spearman_rho, CorrelationReport};
pub use similarity::{
    default_instruction, evaluate_type_two_stage, is_human, open_class_similarity, score_open_class, serialize_values,
    OpenClassItem, ScoreStatus, SimilarityScore, TypeItem,
    INSTRUCTION_SET_VERSION,
};

use crate::attribute::AttributeKind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("label `{0}` is not in the weight matrix")]
    UnknownLabel(String),
    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),
    #[error("fewer than two pairable values")]
    TooFewValues,
    #[error("zero rank variance; correlation undefined")]
    ZeroVariance,
    #[error("non-finite input value")]
    NonFinite,
    #[error("human score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("calibration breakpoints violate monotonicity or range")]
    InvalidCalibration,
    #[error("calibration fitted for {expected}, applied to {got}")]
    KindMismatch { expected: AttributeKind, got: AttributeKind },
    #[error("gold value missing for `{0}`")]
    MissingGold(String),
    #[error("embedding backend failed: {0}")]
    Backend(String),
}
