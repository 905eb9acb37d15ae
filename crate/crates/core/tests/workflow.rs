use std::fs;
use std::path::{Path, PathBuf};

use lcp_core::config::PipelineConfig;
use lcp_core::feature_pipeline::load_matrix;
use lcp_core::regressors::{load_model, ModelSpec};
use lcp_core::workflow::{Stage, StageManifest, Workflow};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn quick_config() -> PipelineConfig {
    let mut c = PipelineConfig::load(fixtures().join("config.toml")).unwrap();
    if let ModelSpec::Gbrt(p) = &mut c.model {
        p.n_estimators = 20;
    }
    c.cv.enabled = false;
    c
}

fn manifest(out: &Path, stage: &str) -> StageManifest {
    let text = fs::read_to_string(out.join("manifests").join(format!("{stage}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn stages_chain_and_stamp_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let wf = Workflow::new(quick_config(), dir.path(), 2).unwrap();
    let m = wf.run(Stage::Ensemble).unwrap();
    for stage in ["build-index", "fit-phonetics", "extract", "train", "predict"] {
        let pre = manifest(dir.path(), stage);
        assert_eq!(pre.config_hash, wf.config_hash());
        assert!(!pre.artifacts.is_empty());
    }
    let files: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(
        files,
        ["pred_engineered.tsv", "pred_ensemble.tsv", "pred_ensemble_mwe.tsv"]
    );

    let features = load_matrix(dir.path().join("features_test.tsv")).unwrap();
    assert_eq!(features.stamp["config_hash"], wf.config_hash());
    assert_eq!(features.stamp["seed"], "7");
    let (_, stamp) = load_model(dir.path().join("model_full.json")).unwrap();
    assert_eq!(stamp["config_hash"], wf.config_hash());

    let ensemble = fs::read_to_string(dir.path().join("pred_ensemble.tsv")).unwrap();
    assert_eq!(ensemble.lines().count(), 61);
    let mwe = fs::read_to_string(dir.path().join("pred_ensemble_mwe.tsv")).unwrap();
    assert_eq!(mwe.lines().count(), 31);
}

#[test]
fn current_stages_are_reused_and_tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let wf = Workflow::new(quick_config(), dir.path(), 0).unwrap();
    wf.run(Stage::FitPhonetics).unwrap();
    assert!(wf.is_current(Stage::BuildIndex));
    let before = fs::metadata(dir.path().join("manifests/build-index.json"))
        .unwrap()
        .modified()
        .unwrap();
    wf.run(Stage::Extract).unwrap();
    let after = fs::metadata(dir.path().join("manifests/build-index.json"))
        .unwrap()
        .modified()
        .unwrap();
    assert_eq!(before, after);

    fs::write(dir.path().join("bpe_merges.txt"), "tampered\n").unwrap();
    assert!(!wf.is_current(Stage::BuildIndex));

    let mut other = quick_config();
    other.seed = 8;
    let wf2 = Workflow::new(other, dir.path(), 0).unwrap();
    assert_ne!(wf2.config_hash(), wf.config_hash());
    assert!(!wf2.is_current(Stage::Extract));
}

#[test]
fn seed_changes_stochastic_outputs_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut other = quick_config();
    other.seed = 99;
    Workflow::new(quick_config(), a.path(), 0)
        .unwrap()
        .run(Stage::Predict)
        .unwrap();
    Workflow::new(other, b.path(), 0).unwrap().run(Stage::Predict).unwrap();
    let strip = |p: &Path| -> String {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("#meta"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip(&a.path().join("features_train.tsv")),
        strip(&b.path().join("features_train.tsv"))
    );
    assert_ne!(
        fs::read(a.path().join("pred_full.tsv")).unwrap(),
        fs::read(b.path().join("pred_full.tsv")).unwrap()
    );
}

#[test]
fn evaluating_the_labels_themselves_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let wf = Workflow::new(quick_config(), dir.path(), 0).unwrap();
    let (report, written) = wf
        .evaluate_file(&fixtures().join("neural/oracle_predictions.tsv"))
        .unwrap();
    assert_eq!(report.overall.n, 60);
    assert_eq!(report.overall.pearson, Some(1.0));
    assert_eq!(report.overall.spearman, Some(1.0));
    assert_eq!(report.overall.mae, 0.0);
    assert_eq!(written.len(), 2);
    assert!(written[0].ends_with("evaluation_oracle_predictions.json"));
}

#[test]
fn full_evaluation_reports_every_prediction_set() {
    let dir = tempfile::tempdir().unwrap();
    let wf = Workflow::new(quick_config(), dir.path(), 0).unwrap();
    wf.run(Stage::Evaluate).unwrap();
    let text = fs::read_to_string(dir.path().join("evaluation.txt")).unwrap();
    for label in ["gbrt_full", "gbrt_reduced", "engineered", "neural", "ensemble"] {
        assert!(text.contains(&format!("predictions: {label}\n")), "{label}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("evaluation.json")).unwrap()).unwrap();
    let overall = json["content"][4]["overall"]["pearson"].as_f64().unwrap();
    assert!(overall > 0.5, "{overall}");
    assert!(dir.path().join("evaluation_mwe.txt").exists());
}

#[test]
fn unlabeled_test_data_cannot_be_evaluated() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixtures().join("data/test.tsv")).unwrap();
    let unlabeled: String = text
        .lines()
        .map(|l| l.rsplit_once('\t').unwrap().0.to_string() + "\n")
        .collect();
    let path = dir.path().join("test_unlabeled.tsv");
    fs::write(&path, unlabeled).unwrap();
    let mut config = quick_config();
    config.data.test = path;
    config.data.mwe_test = None;
    let wf = Workflow::new(config, dir.path().join("out"), 0).unwrap();
    wf.run(Stage::Ensemble).unwrap();
    assert!(!dir.path().join("out/pred_mwe_head.tsv").exists());
    let err = wf.run(Stage::Evaluate).unwrap_err().to_string();
    assert!(err.contains("unlabeled"), "{err}");
}

#[test]
fn attention_report_writes_grid_and_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let wf = Workflow::new(quick_config(), dir.path(), 0).unwrap();
    let m = wf.run(Stage::AttentionReport).unwrap();
    let files: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert!(files.contains(&"attention/head_correlation.csv"), "{files:?}");
    assert!(files.contains(&"attention/head_correlation.json"));
    assert!(files.iter().any(|f| f.starts_with("attention/heatmap_")));
    let csv = fs::read_to_string(dir.path().join("attention/head_correlation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().all(|l| l.split(',').count() == 3));
}

#[test]
fn missing_inputs_are_reported_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config();
    config.corpus.files = vec![dir.path().join("nope.txt")];
    config.lexicons.bnc = Some(dir.path().join("bnc_missing.tsv"));
    let err = Workflow::new(config, dir.path().join("out"), 0)
        .err()
        .unwrap()
        .to_string();
    assert!(err.contains("corpus.files[0]") && err.contains("nope.txt"), "{err}");
    assert!(err.contains("lexicons.bnc"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn invalid_configs_are_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config();
    config.ensemble.threshold = 1.5;
    config.cv.enabled = true;
    config.cv.folds = 1;
    let err = Workflow::new(config, dir.path(), 0).err().unwrap().to_string();
    assert!(err.contains("threshold") && err.contains("folds"), "{err}");
}
