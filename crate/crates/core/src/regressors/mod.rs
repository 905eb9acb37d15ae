//! Regression models: boosted trees, linear/ridge and k-nearest-neighbor
//! baselines, cross-validation and model files.

mod baseline;
mod cv;
mod gbrt;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_pipeline::FeatureMatrix;

pub use baseline::{fit_knn, fit_linear, KnnModel, LinearModel};
pub use cv::{cross_validate, CvReport, FoldScore, Learner, Predictor};
pub use gbrt::{feature_importance, fit_gbrt, fit_gbrt_traced, predict_gbrt, GbrtModel, GbrtParams, Node, Tree};

/// Which model to fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Gbrt(GbrtParams),
    Linear,
    Ridge { lambda: f64 },
    Knn { k: usize },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Gbrt(GbrtParams::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Gbrt(GbrtModel),
    Linear(LinearModel),
    Knn(KnnModel),
}

pub fn fit_model(spec: &ModelSpec, x: &FeatureMatrix, y: &[f64]) -> Result<Model> {
    Ok(match spec {
        ModelSpec::Gbrt(p) => Model::Gbrt(fit_gbrt(x, y, p)?),
        ModelSpec::Linear => Model::Linear(fit_linear(x, y, 0.0)?),
        ModelSpec::Ridge { lambda } => Model::Linear(fit_linear(x, y, *lambda)?),
        ModelSpec::Knn { k } => Model::Knn(fit_knn(x, y, *k)?),
    })
}

impl Model {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            Model::Gbrt(m) => m.predict(x),
            Model::Linear(m) => m.predict(x),
            Model::Knn(m) => m.predict(x),
        }
    }

    pub fn features(&self) -> &[String] {
        match self {
            Model::Gbrt(m) => &m.features,
            Model::Linear(m) => &m.features,
            Model::Knn(m) => &m.features,
        }
    }
}

impl Learner for ModelSpec {
    type Fitted = Model;

    fn fit(&self, x: &FeatureMatrix, y: &[f64]) -> Result<Model> {
        fit_model(self, x, y)
    }
}

impl Predictor for Model {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        Model::predict(self, x)
    }
}

const MODEL_FORMAT: &str = "lcp-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(default)]
    stamp: BTreeMap<String, String>,
    model: Model,
}

/// Versioned JSON dump of a fitted model with a provenance stamp.
pub fn persist_model(model: &Model, stamp: &BTreeMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        stamp: stamp.clone(),
        model: model.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Model, BTreeMap<String, String>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

fn parse_model(text: &str) -> Result<(Model, BTreeMap<String, String>)> {
    let head: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if head.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(Error::Format("not a model file".into()));
    }
    let version = head.get("version").and_then(|v| v.as_u64());
    if version != Some(MODEL_VERSION as u64) {
        return Err(Error::Format(format!(
            "unsupported model version {version:?}, expected {MODEL_VERSION}"
        )));
    }
    let file: ModelFile = serde_json::from_value(head).map_err(|e| Error::Format(e.to_string()))?;
    if let Model::Gbrt(m) = &file.model {
        validate_trees(m)?;
    }
    Ok((file.model, file.stamp))
}

fn validate_trees(m: &GbrtModel) -> Result<()> {
    for (t, tree) in m.trees.iter().enumerate() {
        if tree.nodes.is_empty() {
            return Err(Error::Format(format!("tree {t} has no nodes")));
        }
        for node in &tree.nodes {
            if let Node::Split {
                feature, left, right, ..
            } = node
            {
                if *feature >= m.features.len() || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                    return Err(Error::Format(format!("tree {t} has a dangling reference")));
                }
            }
        }
    }
    Ok(())
}
