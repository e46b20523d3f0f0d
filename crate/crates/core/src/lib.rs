//! Voice-relevant character attribute inference and evaluation.
//!
//! The pipeline locates a character's mentions in a novel, retrieves the
//! passages most relevant to each attribute, prompts a chat model once per
//! character, repairs its (often malformed) JSON reply and scores the result
//! against gold records with per-attribute metrics.

pub mod attribute;
pub mod backends;
pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod evaluate;
pub mod inference;
pub mod metrics;
pub mod num;
pub mod postprocess;
pub mod retrieval;

pub use attribute::{AgeCategory, AttributeKind, Gender};
pub use num::Scalar;

/// Unit embedding in double precision, as produced by every backend.
pub type Embedding = backends::EmbeddingVector<f64>;

pub type F1Report = metrics::F1Report<f64>;
pub type WeightMatrix = metrics::WeightMatrix<f64>;
pub type HasCalibration = metrics::HasCalibration<f64>;
pub type SimilarityScore = metrics::SimilarityScore<f64>;
pub type CorrelationReport = metrics::CorrelationReport<f64>;
pub type AgreementReport = metrics::AgreementReport<f64>;
