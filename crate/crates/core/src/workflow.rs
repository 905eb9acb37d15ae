//! Batch pipeline stages. Each stage reads the configuration plus the
//! artifacts of earlier stages from the output directory, runs missing or
//! stale prerequisites first, and records what it wrote in a manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention_probe::{
    conservation_error, export_figures, head_frequency_correlation, load_dump, AttentionDump, TableFrequency,
    WordFrequency,
};
use crate::complex_data::{load_complex_tsv, make_reduced, stratified_folds, Sample, Subtask, Target};
use crate::config::{FrequencySourceKind, PipelineConfig};
use crate::corpus_index::{
    build_index_from_files, external_frequency_features, frequency_features, google_ngram_features, load_bnc,
    load_google_local, load_index, load_subtlexus, persist_index, BpeCounts, BpeVocabulary, ExternalFreqTable,
    FrequencyIndex, FrequencyResources, Lemmatizer, NgramCountSource, RemoteNgramClient,
};
use crate::ensemble_eval::{
    evaluation_report, mwe_pipeline, read_predictions, single_word_pipeline, threshold_combine, write_predictions,
    EvaluationReport, PredictionSet,
};
use crate::error::{Error, Result};
use crate::feature_pipeline::{
    assemble_matrix, feature_manifest, load_matrix, persist_matrix, ExtractorOutput, FeatureMatrix, Preprocessor,
};
use crate::phonetics::{load_pron_dict, phonetic_features, PronDict, TransitionModel, UnitKind};
use crate::record::FeatureRecord;
use crate::regressors::{cross_validate, fit_model, load_model, persist_model, Model, ModelSpec};
use crate::semantics::{
    attach_precomputed, embedding_features, load_embedding_table, load_precomputed, load_wordnet, wordnet_features,
    EmbeddingTable, PrecomputedEmbeddingFile, SenseInventory,
};
use crate::surface::{lexical_features, readability_features, FamiliarWords};
use crate::syntax::{syntactic_features, ParseClient};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    BuildIndex,
    FitPhonetics,
    Extract,
    Train,
    Predict,
    Ensemble,
    Evaluate,
    AttentionReport,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::BuildIndex,
        Stage::FitPhonetics,
        Stage::Extract,
        Stage::Train,
        Stage::Predict,
        Stage::Ensemble,
        Stage::Evaluate,
        Stage::AttentionReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::BuildIndex => "build-index",
            Stage::FitPhonetics => "fit-phonetics",
            Stage::Extract => "extract",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Ensemble => "ensemble",
            Stage::Evaluate => "evaluate",
            Stage::AttentionReport => "attention-report",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::BuildIndex => &[],
            Stage::FitPhonetics => &[Stage::BuildIndex],
            Stage::Extract => &[Stage::BuildIndex, Stage::FitPhonetics],
            Stage::Train => &[Stage::Extract],
            Stage::Predict => &[Stage::Train],
            Stage::Ensemble => &[Stage::Predict],
            Stage::Evaluate => &[Stage::Ensemble],
            Stage::AttentionReport => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const INDEX_FILE: &str = "index.bin";
pub const BPE_FILE: &str = "bpe_merges.txt";
pub const CHAR_MODEL_FILE: &str = "char_transitions.tsv";
pub const PHONEME_MODEL_FILE: &str = "phoneme_transitions.tsv";
pub const TRAIN_MATRIX: &str = "features_train.tsv";
pub const TEST_MATRIX: &str = "features_test.tsv";
pub const MWE_MATRIX: &str = "features_mwe_test.tsv";
pub const MODEL_FULL: &str = "model_full.json";
pub const MODEL_REDUCED: &str = "model_reduced.json";
pub const PRED_FULL: &str = "pred_full.tsv";
pub const PRED_REDUCED: &str = "pred_reduced.tsv";
pub const PRED_ENGINEERED: &str = "pred_engineered.tsv";
pub const PRED_ENSEMBLE: &str = "pred_ensemble.tsv";
pub const PRED_MWE_HEAD: &str = "pred_mwe_head.tsv";
pub const PRED_MWE_TAIL: &str = "pred_mwe_tail.tsv";
pub const PRED_MWE_ENSEMBLE: &str = "pred_ensemble_mwe.tsv";

/// Files a stage wrote, with content digests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    format: String,
    version: u32,
    stamp: BTreeMap<String, String>,
    content: T,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// One configured pipeline bound to an output directory.
pub struct Workflow {
    config: PipelineConfig,
    hash: String,
    out: PathBuf,
    pool: rayon::ThreadPool,
}

/// Sources used to compute per-sample features.
struct Resources {
    index: FrequencyIndex,
    bpe: BpeVocabulary,
    bpe_counts: BpeCounts,
    lemmatizer: Lemmatizer,
    char_model: Option<TransitionModel>,
    phoneme_model: Option<TransitionModel>,
    pron: Option<PronDict>,
    wordnet: Option<SenseInventory>,
    tables: Vec<ExternalFreqTable>,
    google: Option<Box<dyn NgramCountSource>>,
    parser: Option<ParseClient>,
    familiar: FamiliarWords,
    embeddings: Option<EmbeddingTable>,
    precomputed: Vec<PrecomputedEmbeddingFile>,
    external: Vec<FeatureMatrix>,
}

impl Workflow {
    /// Validates `config`; `workers = 0` uses every core.
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>, workers: usize) -> Result<Self> {
        config.validate()?;
        let out = out.into();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Workflow {
            hash: config.hash(),
            config,
            out,
            pool,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stamp(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("config_hash".to_string(), self.hash.clone()),
            ("seed".to_string(), self.config.seed.to_string()),
        ])
    }

    fn write_stamped<T: Serialize>(&self, name: &str, format: &str, content: T) -> Result<PathBuf> {
        let path = self.path(name);
        let doc = Stamped {
            format: format.into(),
            version: 1,
            stamp: self.stamp(),
            content,
        };
        write_text(&path, &to_json(&doc)?)?;
        Ok(path)
    }

    fn read_stamped<T: for<'de> Deserialize<'de>>(&self, name: &str, format: &str) -> Result<T> {
        let path = self.path(name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let doc: Stamped<T> =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if doc.format != format || doc.version != 1 {
            return Err(Error::Format(format!(
                "{}: expected {format} version 1",
                path.display()
            )));
        }
        Ok(doc.content)
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.out.join("manifests").join(format!("{}.json", stage.name()))
    }

    /// True when `stage` has a manifest for this configuration whose
    /// artifacts are all present and unchanged.
    pub fn is_current(&self, stage: Stage) -> bool {
        let Ok(text) = fs::read_to_string(self.manifest_path(stage)) else {
            return false;
        };
        let Ok(m) = serde_json::from_str::<StageManifest>(&text) else {
            return false;
        };
        m.config_hash == self.hash
            && m.artifacts
                .iter()
                .all(|a| sha256_file(&self.out.join(&a.path)).is_ok_and(|h| h == a.sha256))
    }

    /// Runs `stage` after any prerequisite that is missing or stale.
    pub fn run(&self, stage: Stage) -> Result<StageManifest> {
        self.pool.install(|| self.run_inner(stage))
    }

    fn run_inner(&self, stage: Stage) -> Result<StageManifest> {
        for &pre in stage.prerequisites() {
            if !self.is_current(pre) {
                log::info!("{stage}: running prerequisite {pre}");
                self.run_inner(pre)?;
            }
        }
        log::info!("{stage}: start");
        let written = match stage {
            Stage::BuildIndex => self.build_index()?,
            Stage::FitPhonetics => self.fit_phonetics()?,
            Stage::Extract => self.extract()?,
            Stage::Train => self.train()?,
            Stage::Predict => self.predict()?,
            Stage::Ensemble => self.ensemble()?,
            Stage::Evaluate => self.evaluate()?,
            Stage::AttentionReport => self.attention_report()?,
        };
        let mut artifacts = Vec::new();
        for p in written {
            let rel = p
                .strip_prefix(&self.out)
                .unwrap_or(&p)
                .to_string_lossy()
                .replace('\\', "/");
            artifacts.push(ArtifactEntry {
                sha256: sha256_file(&p)?,
                path: rel,
            });
        }
        let manifest = StageManifest {
            stage: stage.name().into(),
            config_hash: self.hash.clone(),
            seed: self.config.seed,
            artifacts,
        };
        write_text(&self.manifest_path(stage), &to_json(&manifest)?)?;
        log::info!("{stage}: wrote {} artifact(s)", manifest.artifacts.len());
        Ok(manifest)
    }

    fn build_index(&self) -> Result<Vec<PathBuf>> {
        let c = &self.config.corpus;
        let (index, stats) = build_index_from_files(&c.files, c.doc_unit)?;
        let index_path = self.path(INDEX_FILE);
        persist_index(&index, &index_path)?;
        let mut vocab: Vec<(&str, u64)> = index.ngrams(1).collect();
        vocab.sort_unstable();
        let bpe = BpeVocabulary::train(vocab.iter().copied(), c.bpe_merges);
        let bpe_path = self.path(BPE_FILE);
        bpe.save(&bpe_path)?;
        let summary = serde_json::json!({
            "documents": stats.documents,
            "skipped_undecodable": stats.skipped_undecodable,
            "tokens": index.n_tokens(),
            "unigrams": index.ngrams(1).count(),
            "bigrams": index.ngrams(2).count(),
            "trigrams": index.ngrams(3).count(),
            "bpe_merges": bpe.merges().len(),
        });
        let stats_path = self.write_stamped("index_stats.json", "lcp-index-stats", summary)?;
        Ok(vec![index_path, bpe_path, stats_path])
    }

    fn fit_phonetics(&self) -> Result<Vec<PathBuf>> {
        let index = load_index(self.path(INDEX_FILE))?;
        let mut vocab: Vec<(&str, u64)> = index
            .ngrams(1)
            .filter(|(w, _)| w.chars().all(char::is_alphabetic))
            .collect();
        vocab.sort_unstable();
        let weighting = self.config.features.phonetic_weighting;
        let source = format!("corpus:{}", self.hash);
        let char_model = TransitionModel::fit(vocab.iter().copied(), UnitKind::Character, weighting, None, &source)?;
        let char_path = self.path(CHAR_MODEL_FILE);
        char_model.save(&char_path)?;
        let mut written = vec![char_path];
        if let Some(p) = &self.config.lexicons.cmudict {
            let pron = load_pron_dict(p)?;
            let phon = TransitionModel::fit(
                vocab.iter().copied(),
                UnitKind::Phoneme,
                weighting,
                Some(&pron),
                &source,
            )?;
            let phon_path = self.path(PHONEME_MODEL_FILE);
            phon.save(&phon_path)?;
            written.push(phon_path);
        }
        Ok(written)
    }

    fn load_resources(&self) -> Result<Resources> {
        let cfg = &self.config;
        let lex = &cfg.lexicons;
        let index = load_index(self.path(INDEX_FILE))?;
        let bpe = BpeVocabulary::load(self.path(BPE_FILE))?;
        let bpe_counts = BpeCounts::from_index(&index, &bpe);
        let mut lemmatizer = Lemmatizer::default();
        if let Some(dir) = &lex.wordnet_dir {
            for pos in ["noun", "verb", "adj", "adv"] {
                let p = dir.join(format!("{pos}.exc"));
                if p.exists() {
                    lemmatizer = lemmatizer.with_exception_file(&p)?;
                }
            }
        }
        let f = &cfg.features;
        let phonetic = f.phonetic;
        let char_model = phonetic
            .then(|| TransitionModel::load(self.path(CHAR_MODEL_FILE)))
            .transpose()?;
        let phoneme_model = phonetic
            .then(|| TransitionModel::load(self.path(PHONEME_MODEL_FILE)))
            .transpose()?;
        let pron = match (&lex.cmudict, phonetic) {
            (Some(p), true) => Some(load_pron_dict(p)?),
            _ => None,
        };
        let wordnet = match (&lex.wordnet_dir, f.semantic) {
            (Some(d), true) => Some(load_wordnet(d)?),
            (None, true) => {
                log::warn!("features.semantic is on but lexicons.wordnet_dir is not set; sense features skipped");
                None
            }
            _ => None,
        };
        let mut tables = Vec::new();
        if f.external_frequency {
            if let Some(p) = &lex.subtlex {
                tables.push(load_subtlexus(p)?);
            }
            if let Some(p) = &lex.bnc {
                tables.push(load_bnc(p)?);
            }
        }
        let google: Option<Box<dyn NgramCountSource>> = if !f.google {
            None
        } else {
            let local = lex.google_local.as_ref().map(load_google_local).transpose()?;
            match (local, cfg.google.remote) {
                (Some(t), false) => Some(Box::new(t)),
                (local, true) => Some(Box::new(RemoteNgramClient::new(cfg.google.client_config(), local)?)),
                (None, false) => {
                    log::warn!("no n-gram count source configured; n-gram count features skipped");
                    None
                }
            }
        };
        let parser = f.syntax.then(|| ParseClient::new(cfg.parser.clone())).transpose()?;
        let familiar = match &lex.familiar_words {
            Some(p) => FamiliarWords::load(p)?,
            None => FamiliarWords::default(),
        };
        let embeddings = match (&lex.word_embeddings, f.embeddings) {
            (Some(p), true) => Some(load_embedding_table(p)?),
            _ => None,
        };
        let precomputed = if f.embeddings {
            lex.precomputed_embeddings
                .iter()
                .map(|s| load_precomputed(&s.path, &s.prefix))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let external = lex.external_features.iter().map(load_matrix).collect::<Result<_>>()?;
        Ok(Resources {
            index,
            bpe,
            bpe_counts,
            lemmatizer,
            char_model,
            phoneme_model,
            pron,
            wordnet,
            tables,
            google,
            parser,
            familiar,
            embeddings,
            precomputed,
            external,
        })
    }

    /// Per-extractor records for one target in one sentence.
    fn target_records(&self, res: &Resources, sentence: &str, target: &str) -> Vec<(&'static str, FeatureRecord)> {
        let f = &self.config.features;
        let mut out = Vec::new();
        if f.lexical {
            out.push(("surface", lexical_features(target)));
        }
        if let Some(wn) = &res.wordnet {
            out.push((
                "semantics",
                wordnet_features(wn, sentence, target, f.lesk, f.hypernym_counting),
            ));
        }
        if let (Some(c), Some(p), Some(pron)) = (&res.char_model, &res.phoneme_model, &res.pron) {
            out.push(("phonetics", phonetic_features(c, p, pron, target)));
        }
        if f.frequency {
            let fr = FrequencyResources {
                index: &res.index,
                bpe: &res.bpe,
                bpe_counts: &res.bpe_counts,
                lemmatizer: &res.lemmatizer,
            };
            out.push(("corpus_index", frequency_features(&fr, sentence, target)));
        }
        if let Some(g) = &res.google {
            out.push(("google_ngram", google_ngram_features(g.as_ref(), sentence, target)));
        }
        if f.external_frequency && !res.tables.is_empty() {
            out.push(("external_frequency", external_frequency_features(&res.tables, target)));
        }
        if let Some(client) = &res.parser {
            let rec = match client.fetch(sentence) {
                Ok(tree) => syntactic_features(Some(&tree), target),
                Err(e) => {
                    let mut r = syntactic_features(None, target);
                    r.note_issue(format!("no parse: {e}"));
                    r
                }
            };
            out.push(("syntax", rec));
        }
        if f.readability {
            out.push(("readability", readability_features(sentence, &res.familiar)));
        }
        if let Some(t) = &res.embeddings {
            out.push(("embeddings", embedding_features(t, sentence, target)));
        }
        out
    }

    fn sample_records(&self, res: &Resources, s: &Sample) -> Vec<(&'static str, FeatureRecord)> {
        match &s.target {
            Target::Single(w) => self.target_records(res, &s.sentence, w),
            Target::Mwe { head, tail } => {
                let h = self.target_records(res, &s.sentence, head);
                let t = self.target_records(res, &s.sentence, tail);
                h.into_iter()
                    .zip(t)
                    .map(|((src, mut a), (_, b))| {
                        a = a.suffixed("_head");
                        a.extend(b.suffixed("_tail"));
                        (src, a)
                    })
                    .collect()
            }
        }
    }

    fn extract_dataset(
        &self,
        res: &Resources,
        samples: &[Sample],
        dataset: &str,
    ) -> Result<(FeatureMatrix, Vec<String>)> {
        let per_sample: Vec<Vec<(&'static str, FeatureRecord)>> =
            samples.par_iter().map(|s| self.sample_records(res, s)).collect();
        let mut outputs: Vec<ExtractorOutput> = Vec::new();
        let mut issues = Vec::new();
        if let Some(first) = per_sample.first() {
            for (k, (src, _)) in first.iter().enumerate() {
                let mut records = Vec::with_capacity(samples.len());
                for (s, recs) in samples.iter().zip(&per_sample) {
                    let rec = &recs[k].1;
                    for issue in rec.issues() {
                        issues.push(format!("{dataset}\t{}\t{src}\t{issue}", s.id));
                    }
                    records.push(rec.clone());
                }
                outputs.push(ExtractorOutput {
                    source: src.to_string(),
                    records,
                });
            }
        }
        for p in &res.precomputed {
            outputs.push(ExtractorOutput {
                source: format!("precomputed:{}", p.prefix),
                records: attach_precomputed(p, samples.iter().map(|s| s.id.as_str())),
            });
        }
        let mut m = assemble_matrix(samples, &outputs, &res.external)?;
        m.stamp = self.stamp();
        m.stamp.insert("dataset".into(), dataset.into());
        Ok((m, issues))
    }

    fn extract(&self) -> Result<Vec<PathBuf>> {
        let res = self.load_resources()?;
        let data = &self.config.data;
        let mut written = Vec::new();
        let mut issues = Vec::new();
        let mut sets = vec![
            ("train", load_complex_tsv(&data.train, Subtask::Single)?, TRAIN_MATRIX),
            ("test", load_complex_tsv(&data.test, Subtask::Single)?, TEST_MATRIX),
        ];
        if let Some(p) = &data.mwe_test {
            sets.push(("mwe_test", load_complex_tsv(p, Subtask::Mwe)?, MWE_MATRIX));
        }
        for (name, samples, file) in &sets {
            let (m, iss) = self.extract_dataset(&res, samples, name)?;
            log::info!("extract: {name}: {} rows x {} columns", m.n_rows(), m.n_cols());
            if *name == "train" {
                let manifest = feature_manifest(&m);
                if !manifest.core_missing.is_empty() {
                    log::warn!("core features not produced: {}", manifest.core_missing.join(", "));
                }
                written.push(self.write_stamped("feature_manifest.json", "lcp-feature-manifest", manifest)?);
            }
            issues.extend(iss);
            let path = self.path(file);
            persist_matrix(&m, &path)?;
            written.push(path);
        }
        if let Some(parser) = &res.parser {
            if parser.network_calls() > 0 {
                log::info!("parser: {} network request(s)", parser.network_calls());
            }
        }
        let mut text = String::from("dataset\tid\tsource\tissue\n");
        for line in &issues {
            text.push_str(line);
            text.push('\n');
        }
        let issues_path = self.path("extraction_issues.tsv");
        write_text(&issues_path, &text)?;
        written.push(issues_path);
        if !issues.is_empty() {
            log::warn!("{} extraction issue(s); see extraction_issues.tsv", issues.len());
        }
        Ok(written)
    }

    fn model_spec(&self) -> ModelSpec {
        match &self.config.model {
            ModelSpec::Gbrt(p) => {
                let mut p = p.clone();
                p.seed = self.config.seed;
                ModelSpec::Gbrt(p)
            }
            other => other.clone(),
        }
    }

    fn fit_variant(&self, m: &FeatureMatrix, labels: &[f64], name: &str) -> Result<Vec<PathBuf>> {
        let prep = Preprocessor::fit(m, labels, &self.config.preprocess)?;
        let model = fit_model(&self.model_spec(), &prep.transform(m)?, labels)?;
        let model_path = self.path(&format!("model_{name}.json"));
        persist_model(&model, &self.stamp(), &model_path)?;
        let prep_path = self.write_stamped(&format!("preprocess_{name}.json"), "lcp-preprocessor", &prep)?;
        let mut written = vec![model_path, prep_path];
        if let Model::Gbrt(g) = &model {
            let mut text = String::from("feature\timportance\n");
            for (f, v) in g.feature_importance() {
                text.push_str(&format!("{f}\t{v}\n"));
            }
            let p = self.path(&format!("feature_importance_{name}.tsv"));
            write_text(&p, &text)?;
            written.push(p);
        }
        Ok(written)
    }

    fn train(&self) -> Result<Vec<PathBuf>> {
        let samples = load_complex_tsv(&self.config.data.train, Subtask::Single)?;
        let m = load_matrix(self.path(TRAIN_MATRIX))?;
        let labels = aligned_labels(&m, &samples)?;
        let mut written = self.fit_variant(&m, &labels, "full")?;

        let reduced = make_reduced(&samples, &self.config.reduced.fractions(), self.config.seed)?;
        let pos: HashMap<&str, usize> = m.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let rows: Vec<usize> = reduced.iter().map(|s| pos[s.id.as_str()]).collect();
        log::info!("train: reduced set keeps {} of {} samples", rows.len(), samples.len());
        let rm = m.subset_rows(&rows);
        let rlabels: Vec<f64> = rows.iter().map(|&i| labels[i]).collect();
        written.extend(self.fit_variant(&rm, &rlabels, "reduced")?);

        if self.config.cv.enabled {
            let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
            let ordered: Vec<Sample> = m.ids().iter().map(|id| by_id[id.as_str()].clone()).collect();
            let folds = stratified_folds(&ordered, self.config.cv.folds, self.config.seed)?;
            let report = cross_validate(&self.model_spec(), &m, &labels, &folds, &self.config.preprocess)?;
            if let Some(mean) = report.mean_pearson {
                log::info!(
                    "train: {}-fold CV Pearson {mean:.4} +/- {:.4}",
                    folds.len(),
                    report.std_pearson.unwrap_or(0.0)
                );
            }
            let oof = PredictionSet::from_pairs(
                "cv_out_of_fold",
                m.ids()
                    .iter()
                    .cloned()
                    .zip(report.out_of_fold.iter().map(|p| p.unwrap_or(f64::NAN))),
            );
            written.push(self.write_stamped("cv_report.json", "lcp-cv-report", &report)?);
            if let Ok(oof) = oof {
                let p = self.path("pred_cv_out_of_fold.tsv");
                write_predictions(&oof, &p)?;
                written.push(p);
            }
        }
        Ok(written)
    }

    fn load_variant(&self, name: &str) -> Result<(Preprocessor, Model)> {
        let prep: Preprocessor = self.read_stamped(&format!("preprocess_{name}.json"), "lcp-preprocessor")?;
        let (model, _) = load_model(self.path(&format!("model_{name}.json")))?;
        Ok((prep, model))
    }

    fn predict_matrix(&self, m: &FeatureMatrix, variant: &(Preprocessor, Model), label: &str) -> Result<PredictionSet> {
        let pred = variant.1.predict(&variant.0.transform(m)?)?;
        PredictionSet::from_pairs(label, m.ids().iter().cloned().zip(pred))
    }

    fn predict(&self) -> Result<Vec<PathBuf>> {
        let full = self.load_variant("full")?;
        let reduced = self.load_variant("reduced")?;
        let test = load_matrix(self.path(TEST_MATRIX))?;
        let mut written = Vec::new();
        for (variant, label, file) in [
            (&full, "gbrt_full", PRED_FULL),
            (&reduced, "gbrt_reduced", PRED_REDUCED),
        ] {
            let p = self.path(file);
            write_predictions(&self.predict_matrix(&test, variant, label)?, &p)?;
            written.push(p);
        }
        if self.config.data.mwe_test.is_some() {
            let mwe = load_matrix(self.path(MWE_MATRIX))?;
            for (suffix, file) in [("_head", PRED_MWE_HEAD), ("_tail", PRED_MWE_TAIL)] {
                let view = mwe.constituent_view(suffix)?;
                let f = self.predict_matrix(&view, &full, "full")?;
                let r = self.predict_matrix(&view, &reduced, "reduced")?;
                let combined =
                    threshold_combine(&f, &r, self.config.ensemble.threshold)?.relabel(suffix.trim_start_matches('_'));
                let p = self.path(file);
                write_predictions(&combined, &p)?;
                written.push(p);
            }
        }
        Ok(written)
    }

    fn neural(&self, path: &Option<PathBuf>, label: &str) -> Result<Option<PredictionSet>> {
        path.as_ref().map(|p| read_predictions(p, label)).transpose()
    }

    fn ensemble(&self) -> Result<Vec<PathBuf>> {
        let spec = self.config.ensemble.spec();
        let full = read_predictions(self.path(PRED_FULL), "gbrt_full")?;
        let reduced = read_predictions(self.path(PRED_REDUCED), "gbrt_reduced")?;
        let neural = self.neural(&self.config.ensemble.neural_predictions, "neural")?;
        let engineered = threshold_combine(&full, &reduced, spec.threshold)?.relabel("engineered");
        let mut written = Vec::new();
        let p = self.path(PRED_ENGINEERED);
        write_predictions(&engineered, &p)?;
        written.push(p);
        let p = self.path(PRED_ENSEMBLE);
        write_predictions(&single_word_pipeline(&full, &reduced, neural.as_ref(), &spec)?, &p)?;
        written.push(p);
        if self.config.data.mwe_test.is_some() {
            let head = read_predictions(self.path(PRED_MWE_HEAD), "head")?;
            let tail = read_predictions(self.path(PRED_MWE_TAIL), "tail")?;
            let neural = self.neural(&self.config.ensemble.neural_mwe_predictions, "neural_mwe")?;
            let p = self.path(PRED_MWE_ENSEMBLE);
            write_predictions(&mwe_pipeline(&head, &tail, neural.as_ref(), &spec)?, &p)?;
            written.push(p);
        }
        Ok(written)
    }

    fn write_reports(&self, name: &str, reports: &[EvaluationReport]) -> Result<Vec<PathBuf>> {
        let json = self.write_stamped(&format!("{name}.json"), "lcp-evaluation", reports)?;
        let text: String = reports.iter().map(|r| r.render_text() + "\n").collect();
        let txt = self.path(&format!("{name}.txt"));
        write_text(&txt, &text)?;
        Ok(vec![json, txt])
    }

    fn evaluate(&self) -> Result<Vec<PathBuf>> {
        let test = load_complex_tsv(&self.config.data.test, Subtask::Single)?;
        if test.iter().any(|s| s.complexity.is_none()) {
            return Err(Error::Validation(
                "test set has unlabeled samples; nothing to evaluate".into(),
            ));
        }
        let mut sets = vec![
            read_predictions(self.path(PRED_FULL), "gbrt_full")?,
            read_predictions(self.path(PRED_REDUCED), "gbrt_reduced")?,
            read_predictions(self.path(PRED_ENGINEERED), "engineered")?,
        ];
        if let Some(n) = self.neural(&self.config.ensemble.neural_predictions, "neural")? {
            sets.push(n);
        }
        sets.push(read_predictions(self.path(PRED_ENSEMBLE), "ensemble")?);
        let reports = sets
            .iter()
            .map(|s| evaluation_report(s, &test))
            .collect::<Result<Vec<_>>>()?;
        for r in &reports {
            log::info!(
                "evaluate: {}: pearson {}",
                r.predictions,
                r.overall.pearson.map_or("n/a".into(), |p| format!("{p:.4}"))
            );
        }
        let mut written = self.write_reports("evaluation", &reports)?;
        if let Some(p) = &self.config.data.mwe_test {
            let mwe = load_complex_tsv(p, Subtask::Mwe)?;
            if mwe.iter().all(|s| s.complexity.is_some()) {
                let mut sets = vec![
                    read_predictions(self.path(PRED_MWE_HEAD), "head")?,
                    read_predictions(self.path(PRED_MWE_TAIL), "tail")?,
                ];
                if let Some(n) = self.neural(&self.config.ensemble.neural_mwe_predictions, "neural_mwe")? {
                    sets.push(n);
                }
                sets.push(read_predictions(self.path(PRED_MWE_ENSEMBLE), "ensemble_mwe")?);
                let reports = sets
                    .iter()
                    .map(|s| evaluation_report(s, &mwe))
                    .collect::<Result<Vec<_>>>()?;
                written.extend(self.write_reports("evaluation_mwe", &reports)?);
            }
        }
        Ok(written)
    }

    /// Report for an arbitrary predictions file against the test labels,
    /// written as `evaluation_<stem>.{json,txt}`.
    pub fn evaluate_file(&self, predictions: &Path) -> Result<(EvaluationReport, Vec<PathBuf>)> {
        let stem = predictions
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "predictions".into());
        let set = read_predictions(predictions, &stem)?;
        let mut samples = load_complex_tsv(&self.config.data.test, Subtask::Single)?;
        if let Some(p) = &self.config.data.mwe_test {
            samples.extend(load_complex_tsv(p, Subtask::Mwe)?);
        }
        samples.retain(|s| s.complexity.is_some());
        let report = evaluation_report(&set, &samples)?;
        let safe: String = stem
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        let written = self.write_reports(&format!("evaluation_{safe}"), std::slice::from_ref(&report))?;
        Ok((report, written))
    }

    fn attention_report(&self) -> Result<Vec<PathBuf>> {
        let cfg = &self.config.attention;
        if cfg.dumps.is_empty() {
            return Err(Error::Config(
                "attention.dumps: no attention dump files configured".into(),
            ));
        }
        let dumps: Vec<AttentionDump> = cfg.dumps.iter().map(load_dump).collect::<Result<_>>()?;
        let conservation = dumps
            .iter()
            .map(conservation_error)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let probe = cfg.probe(self.config.seed);
        let grid = match cfg.frequency {
            FrequencySourceKind::Index => {
                if !self.is_current(Stage::BuildIndex) {
                    self.run_inner(Stage::BuildIndex)?;
                }
                let index = load_index(self.path(INDEX_FILE))?;
                head_frequency_correlation(&dumps, &index as &dyn WordFrequency, &probe)?
            }
            kind => {
                let (path, field) = match kind {
                    FrequencySourceKind::Subtlex => (&self.config.lexicons.subtlex, "lexicons.subtlex"),
                    _ => (&self.config.lexicons.bnc, "lexicons.bnc"),
                };
                let path = path
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("{field}: required by attention.frequency")))?;
                let table = match kind {
                    FrequencySourceKind::Subtlex => load_subtlexus(path)?,
                    _ => load_bnc(path)?,
                };
                head_frequency_correlation(
                    &dumps,
                    &TableFrequency {
                        table: &table,
                        field: 0,
                    },
                    &probe,
                )?
            }
        };
        let sample_id = cfg
            .heatmap_sample
            .clone()
            .or_else(|| grid.samples.first().cloned())
            .ok_or_else(|| Error::Validation("no samples for the heatmap".into()))?;
        let sample = dumps
            .iter()
            .flat_map(|d| d.samples.iter())
            .find(|s| s.id == sample_id)
            .ok_or_else(|| Error::Validation(format!("attention.heatmap_sample: {sample_id} not in the dumps")))?;
        let dir = self.path("attention");
        let mut written = export_figures(&grid, sample, cfg.heatmap_layer, cfg.heatmap_head, &dir)?;
        let summary = serde_json::json!({
            "grid": grid,
            "conservation_max_error": conservation,
        });
        written.push(self.write_stamped("attention/head_correlation.json", "lcp-attention-report", summary)?);
        Ok(written)
    }
}

/// Labels in matrix row order.
fn aligned_labels(m: &FeatureMatrix, samples: &[Sample]) -> Result<Vec<f64>> {
    let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    m.ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .ok_or_else(|| Error::Validation(format!("matrix row {id} has no sample")))?
                .label()
        })
        .collect()
}
