//! Pipeline configuration file (TOML) with validation and a stable hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention_probe::{Aggregation, ProbeConfig};
use crate::complex_data::RemovalFractions;
use crate::corpus_index::{DocUnit, RemoteNgramConfig};
use crate::ensemble_eval::{EnsembleSpec, MweWeights, SingleWeights};
use crate::error::{Error, Result};
use crate::feature_pipeline::PreprocessConfig;
use crate::phonetics::Weighting;
use crate::regressors::ModelSpec;
use crate::semantics::{HypernymCounting, LeskOptions};
use crate::syntax::ParserConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of every stochastic step (folds, reduced set, boosting, probe
    /// sampling).
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub lexicons: LexiconConfig,
    #[serde(default)]
    pub features: FeatureToggles,
    #[serde(default)]
    pub google: GoogleConfig,
    #[serde(default)]
    pub parser: ParserConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub model: ModelSpec,
    pub reduced: ReducedConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub attention: AttentionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    /// Two-token targets, predicted from the single-word models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mwe_test: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub files: Vec<PathBuf>,
    pub doc_unit: DocUnit,
    pub bpe_merges: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconConfig {
    pub cmudict: Option<PathBuf>,
    pub wordnet_dir: Option<PathBuf>,
    pub subtlex: Option<PathBuf>,
    pub bnc: Option<PathBuf>,
    pub google_local: Option<PathBuf>,
    pub word_embeddings: Option<PathBuf>,
    pub familiar_words: Option<PathBuf>,
    pub precomputed_embeddings: Vec<PrecomputedSpec>,
    /// Extra id-keyed feature columns (matrix interchange format).
    pub external_features: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecomputedSpec {
    pub path: PathBuf,
    pub prefix: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureToggles {
    pub lexical: bool,
    pub semantic: bool,
    pub phonetic: bool,
    pub frequency: bool,
    pub google: bool,
    pub external_frequency: bool,
    pub syntax: bool,
    pub readability: bool,
    pub embeddings: bool,
    pub hypernym_counting: HypernymCounting,
    pub lesk: LeskOptions,
    pub phonetic_weighting: Weighting,
}

impl Default for FeatureToggles {
    fn default() -> Self {
        FeatureToggles {
            lexical: true,
            semantic: true,
            phonetic: true,
            frequency: true,
            google: true,
            external_frequency: true,
            syntax: true,
            readability: true,
            embeddings: true,
            hypernym_counting: HypernymCounting::Direct,
            lesk: LeskOptions::default(),
            phonetic_weighting: Weighting::TokenFrequency,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoogleConfig {
    /// Query the remote service for phrases absent from the local table.
    pub remote: bool,
    pub client: RemoteNgramConfigSer,
}

/// Serializable mirror of the remote client settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteNgramConfigSer {
    pub endpoint: String,
    pub query_param: String,
    pub extra_params: BTreeMap<String, String>,
    pub count_field: String,
    pub cache_path: Option<PathBuf>,
    pub min_interval_ms: u64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RemoteNgramConfigSer {
    fn default() -> Self {
        let d = RemoteNgramConfig::default();
        RemoteNgramConfigSer {
            endpoint: d.endpoint,
            query_param: d.query_param,
            extra_params: d.extra_params.into_iter().collect(),
            count_field: d.count_field,
            cache_path: d.cache_path,
            min_interval_ms: d.min_interval_ms,
            max_attempts: d.max_attempts,
            backoff_base_ms: d.backoff_base_ms,
            timeout_ms: d.timeout_ms,
        }
    }
}

impl GoogleConfig {
    pub fn client_config(&self) -> RemoteNgramConfig {
        let c = &self.client;
        RemoteNgramConfig {
            endpoint: c.endpoint.clone(),
            query_param: c.query_param.clone(),
            extra_params: c.extra_params.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            count_field: c.count_field.clone(),
            cache_path: c.cache_path.clone(),
            offline: !self.remote,
            min_interval_ms: c.min_interval_ms,
            max_attempts: c.max_attempts,
            backoff_base_ms: c.backoff_base_ms,
            timeout_ms: c.timeout_ms,
        }
    }
}

/// Fractions of classes 1-3 removed to form the reduced training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedConfig {
    pub class_1: f64,
    pub class_2: f64,
    pub class_3: f64,
}

impl ReducedConfig {
    pub fn fractions(&self) -> RemovalFractions {
        BTreeMap::from([(1, self.class_1), (2, self.class_2), (3, self.class_3)])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub enabled: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            enabled: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub threshold: f64,
    pub single: SingleWeights,
    pub mwe: MweWeights,
    /// Clamp ensemble outputs to [0, 1].
    pub clip: bool,
    pub neural_predictions: Option<PathBuf>,
    pub neural_mwe_predictions: Option<PathBuf>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let d = EnsembleSpec::default();
        EnsembleConfig {
            threshold: d.threshold,
            single: d.single,
            mwe: d.mwe,
            clip: d.clip,
            neural_predictions: None,
            neural_mwe_predictions: None,
        }
    }
}

impl EnsembleConfig {
    pub fn spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            threshold: self.threshold,
            single: self.single.clone(),
            mwe: self.mwe.clone(),
            clip: self.clip,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencySourceKind {
    #[default]
    Index,
    Subtlex,
    Bnc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    pub dumps: Vec<PathBuf>,
    pub frequency: FrequencySourceKind,
    pub n_samples: usize,
    pub aggregation: Aggregation,
    /// Correlate against ln(1 + frequency) rather than raw counts.
    pub log_frequency: bool,
    /// 0-based layer and head of the exported heatmap.
    pub heatmap_layer: usize,
    pub heatmap_head: usize,
    /// Sample for the heatmap; the first sampled one when absent.
    pub heatmap_sample: Option<String>,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        let d = ProbeConfig::default();
        AttentionConfig {
            dumps: Vec::new(),
            frequency: FrequencySourceKind::Index,
            n_samples: d.n_samples,
            aggregation: d.aggregation,
            log_frequency: d.log_frequency,
            heatmap_layer: 0,
            heatmap_head: 0,
            heatmap_sample: None,
        }
    }
}

impl AttentionConfig {
    pub fn probe(&self, seed: u64) -> ProbeConfig {
        ProbeConfig {
            n_samples: self.n_samples,
            seed,
            aggregation: self.aggregation,
            log_frequency: self.log_frequency,
        }
    }
}

fn bare(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Validation(m) => m,
        other => other.to_string(),
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut v: Vec<&mut PathBuf> = vec![&mut self.data.train, &mut self.data.test];
        v.extend(self.data.mwe_test.as_mut());
        v.extend(self.corpus.files.iter_mut());
        let l = &mut self.lexicons;
        for p in [
            &mut l.cmudict,
            &mut l.wordnet_dir,
            &mut l.subtlex,
            &mut l.bnc,
            &mut l.google_local,
            &mut l.word_embeddings,
            &mut l.familiar_words,
        ] {
            v.extend(p.as_mut());
        }
        v.extend(l.precomputed_embeddings.iter_mut().map(|p| &mut p.path));
        v.extend(l.external_features.iter_mut());
        v.extend(self.google.client.cache_path.as_mut());
        v.extend(self.parser.precomputed_path.as_mut());
        v.extend(self.parser.cache_path.as_mut());
        v.extend(self.ensemble.neural_predictions.as_mut());
        v.extend(self.ensemble.neural_mwe_predictions.as_mut());
        v.extend(self.attention.dumps.iter_mut());
        v
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in self.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Every problem found, one per line, prefixed by the field path.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut need = |field: &str, p: &Path| {
            if !p.exists() {
                problems.push(format!("{field}: {} does not exist", p.display()));
            }
        };
        need("data.train", &self.data.train);
        need("data.test", &self.data.test);
        if let Some(p) = &self.data.mwe_test {
            need("data.mwe_test", p);
        }
        for (i, p) in self.corpus.files.iter().enumerate() {
            need(&format!("corpus.files[{i}]"), p);
        }
        let l = &self.lexicons;
        for (name, p) in [
            ("lexicons.cmudict", &l.cmudict),
            ("lexicons.wordnet_dir", &l.wordnet_dir),
            ("lexicons.subtlex", &l.subtlex),
            ("lexicons.bnc", &l.bnc),
            ("lexicons.google_local", &l.google_local),
            ("lexicons.word_embeddings", &l.word_embeddings),
            ("lexicons.familiar_words", &l.familiar_words),
            ("parser.precomputed_path", &self.parser.precomputed_path),
            ("ensemble.neural_predictions", &self.ensemble.neural_predictions),
            ("ensemble.neural_mwe_predictions", &self.ensemble.neural_mwe_predictions),
        ] {
            if let Some(p) = p {
                need(name, p);
            }
        }
        for (i, p) in l.precomputed_embeddings.iter().enumerate() {
            need(&format!("lexicons.precomputed_embeddings[{i}].path"), &p.path);
        }
        for (i, p) in l.external_features.iter().enumerate() {
            need(&format!("lexicons.external_features[{i}]"), p);
        }
        for (i, p) in self.attention.dumps.iter().enumerate() {
            need(&format!("attention.dumps[{i}]"), p);
        }
        if self.corpus.files.is_empty() {
            problems.push("corpus.files: at least one corpus file is required".into());
        }
        if self.features.phonetic && l.cmudict.is_none() {
            problems.push("lexicons.cmudict: required when features.phonetic is enabled".into());
        }
        if self.cv.enabled && self.cv.folds < 2 {
            problems.push(format!("cv.folds: must be at least 2, got {}", self.cv.folds));
        }
        let t = self.preprocess.quasi_constant_threshold;
        if !(t > 0.5 && t <= 1.0) {
            problems.push(format!("preprocess.quasi_constant_threshold: {t} not in (0.5, 1]"));
        }
        if self.preprocess.mi_k == 0 {
            problems.push("preprocess.mi_k: must be at least 1".into());
        }
        if let ModelSpec::Gbrt(p) = &self.model {
            if let Err(e) = p.validate() {
                problems.push(format!("model: {}", bare(e)));
            }
        }
        for (k, f) in self.reduced.fractions() {
            if !(0.0..=1.0).contains(&f) {
                problems.push(format!("reduced.class_{k}: {f} not in [0, 1]"));
            }
        }
        if let Err(e) = self.ensemble.spec().validate() {
            problems.push(format!("ensemble: {}", bare(e)));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid configuration:\n  {}",
                problems.join("\n  ")
            )))
        }
    }

    /// Hex SHA-256 over the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// A complete configuration with every default spelled out.
    pub fn reference() -> Self {
        PipelineConfig {
            seed: 0,
            data: DataConfig {
                train: "data/train.tsv".into(),
                test: "data/test.tsv".into(),
                mwe_test: None,
            },
            corpus: CorpusConfig {
                files: vec!["corpora/corpus.txt".into()],
                doc_unit: DocUnit::Line,
                bpe_merges: 2000,
            },
            lexicons: LexiconConfig {
                cmudict: Some("lexicons/cmudict.dict".into()),
                ..LexiconConfig::default()
            },
            features: FeatureToggles::default(),
            google: GoogleConfig::default(),
            parser: ParserConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelSpec::default(),
            reduced: ReducedConfig {
                class_1: 0.0,
                class_2: 0.0,
                class_3: 0.0,
            },
            cv: CvConfig::default(),
            ensemble: EnsembleConfig::default(),
            attention: AttentionConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::GbrtParams;

    const MINIMAL: &str = r#"
[data]
train = "train.tsv"
test = "test.tsv"

[reduced]
class_1 = 0.2
class_2 = 0.1
class_3 = 0.0
"#;

    #[test]
    fn defaults_fill_in() {
        let c = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.model, ModelSpec::Gbrt(GbrtParams::default()));
        assert_eq!(c.ensemble.threshold, 0.59);
        assert_eq!(c.preprocess.mi_k, 300);
        assert_eq!(c.cv.folds, 5);
        assert!(c.parser.offline);
    }

    #[test]
    fn reference_config_round_trips() {
        let r = PipelineConfig::reference();
        let back = PipelineConfig::from_toml(&r.to_toml()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.hash(), r.hash());
    }

    #[test]
    fn hash_tracks_semantic_fields() {
        let a = PipelineConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.ensemble.threshold = 0.6;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
        let reordered = format!(
            "{}\n",
            MINIMAL.replace("class_1 = 0.2\nclass_2 = 0.1", "class_2 = 0.1\nclass_1 = 0.2")
        );
        assert_eq!(PipelineConfig::from_toml(&reordered).unwrap().hash(), a.hash());
    }

    #[test]
    fn unknown_and_missing_fields_are_reported() {
        let e = PipelineConfig::from_toml(&format!("{MINIMAL}\n[model]\nkind = \"gbrt\"\nn_trees = 3\n")).unwrap_err();
        assert!(e.to_string().contains("n_trees"), "{e}");
        let e = PipelineConfig::from_toml("[data]\ntrain = \"a\"\ntest = \"b\"\n").unwrap_err();
        assert!(e.to_string().contains("reduced"), "{e}");
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut c = PipelineConfig::from_toml(MINIMAL).unwrap();
        c.resolve_paths(Path::new("/nonexistent"));
        c.ensemble.threshold = 2.0;
        let msg = c.validate().unwrap_err().to_string();
        for field in [
            "data.train",
            "data.test",
            "corpus.files",
            "lexicons.cmudict",
            "ensemble",
        ] {
            assert!(msg.contains(field), "{field} not in {msg}");
        }
    }
}
