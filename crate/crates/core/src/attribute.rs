//! Attribute vocabulary shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The eight voice-relevant attributes inferred for each character.
///
/// Declaration order is the canonical enumeration order used for prompts,
/// merged passage lists and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Age,
    Gender,
    Origin,
    Residence,
    SpokenLanguages,
    Type,
    Occupation,
    PhysicalHealth,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 8] = [
        AttributeKind::Age,
        AttributeKind::Gender,
        AttributeKind::Origin,
        AttributeKind::Residence,
        AttributeKind::SpokenLanguages,
        AttributeKind::Type,
        AttributeKind::Occupation,
        AttributeKind::PhysicalHealth,
    ];

    /// Attributes scored with the embedding similarity metric. `Type` is only
    /// scored this way for non-human gold values.
    pub const OPEN_CLASS: [AttributeKind; 5] = [
        AttributeKind::Origin,
        AttributeKind::Residence,
        AttributeKind::Occupation,
        AttributeKind::PhysicalHealth,
        AttributeKind::Type,
    ];

    /// Stable lower_snake serialization name.
    pub fn key(self) -> &'static str {
        match self {
            AttributeKind::Age => "age",
            AttributeKind::Gender => "gender",
            AttributeKind::Origin => "origin",
            AttributeKind::Residence => "residence",
            AttributeKind::SpokenLanguages => "spoken_languages",
            AttributeKind::Type => "type",
            AttributeKind::Occupation => "occupation",
            AttributeKind::PhysicalHealth => "physical_health",
        }
    }

    /// Human-readable label for reports.
    pub fn label(self) -> &'static str {
        match self {
            AttributeKind::Age => "Age",
            AttributeKind::Gender => "Gender",
            AttributeKind::Origin => "Origin",
            AttributeKind::Residence => "Residence",
            AttributeKind::SpokenLanguages => "Spoken Languages",
            AttributeKind::Type => "Type",
            AttributeKind::Occupation => "Occupation",
            AttributeKind::PhysicalHealth => "Physical Health",
        }
    }

    /// Whether the attribute holds a list of values.
    pub fn is_list(self) -> bool {
        matches!(
            self,
            AttributeKind::Origin
                | AttributeKind::Residence
                | AttributeKind::SpokenLanguages
                | AttributeKind::Occupation
        )
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.key() == key)
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for AttributeKind {
    type Err = UnknownAttribute;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace([' ', '-'], "_");
        AttributeKind::from_key(&norm).ok_or_else(|| UnknownAttribute(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown attribute `{0}`")]
pub struct UnknownAttribute(pub String);

/// Relative age group, totally ordered from child to senior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeCategory {
    Child,
    Teenager,
    Adult,
    Senior,
}

impl AgeCategory {
    pub const ALL: [AgeCategory; 4] = [
        AgeCategory::Child,
        AgeCategory::Teenager,
        AgeCategory::Adult,
        AgeCategory::Senior,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeCategory::Child => "child",
            AgeCategory::Teenager => "teenager",
            AgeCategory::Adult => "adult",
            AgeCategory::Senior => "senior",
        }
    }

    /// Case-insensitive match against the four category names.
    pub fn parse_loose(s: &str) -> Option<Self> {
        let folded = s.trim().to_lowercase();
        Self::ALL.into_iter().find(|c| c.as_str() == folded)
    }
}

impl fmt::Display for AgeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}
