//! Named feature values emitted by the extractors.

use serde::{Deserialize, Serialize};

/// How a column behaves downstream. Only `NonNegative` columns get a
/// `log1p_` companion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Real,
    NonNegative,
    Flag,
    Embedding,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Real => "real",
            FeatureKind::NonNegative => "non_negative",
            FeatureKind::Flag => "flag",
            FeatureKind::Embedding => "embedding",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "real" => FeatureKind::Real,
            "non_negative" => FeatureKind::NonNegative,
            "flag" => FeatureKind::Flag,
            "embedding" => FeatureKind::Embedding,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub name: String,
    pub value: Option<f64>,
    pub kind: FeatureKind,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureRecord {
    features: Vec<Feature>,
    issues: Vec<String>,
}

impl FeatureRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Option<f64>, kind: FeatureKind) {
        self.features.push(Feature {
            name: name.into(),
            value,
            kind,
        });
    }

    pub fn real(&mut self, name: impl Into<String>, value: Option<f64>) {
        self.push(name, value, FeatureKind::Real);
    }

    pub fn non_negative(&mut self, name: impl Into<String>, value: Option<f64>) {
        self.push(name, value, FeatureKind::NonNegative);
    }

    pub fn flag(&mut self, name: impl Into<String>, value: Option<bool>) {
        self.push(name, value.map(|b| if b { 1.0 } else { 0.0 }), FeatureKind::Flag);
    }

    pub fn extend(&mut self, other: FeatureRecord) {
        self.features.extend(other.features);
        self.issues.extend(other.issues);
    }

    /// Record a non-fatal problem met while extracting this record.
    pub fn note_issue(&mut self, issue: impl Into<String>) {
        self.issues.push(issue.into());
    }

    pub fn issues(&self) -> &[String] {
        &self.issues
    }

    /// Appends `suffix` to every feature name.
    pub fn suffixed(mut self, suffix: &str) -> Self {
        for f in &mut self.features {
            f.name.push_str(suffix);
        }
        self
    }

    /// `None` if no such feature; `Some(None)` if present but missing.
    pub fn get(&self, name: &str) -> Option<Option<f64>> {
        self.features.iter().find(|f| f.name == name).map(|f| f.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Feature> {
        self.features.iter()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }
}
