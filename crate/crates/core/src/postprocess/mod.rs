//! Turning raw model replies into typed predictions.

pub mod parse;
pub mod repair;

pub use parse::{parse_prediction, CharacterPrediction, ParseError, Provenance};
pub use repair::{repair_json, RepairError, RepairLog, RepairRule, Repaired};
