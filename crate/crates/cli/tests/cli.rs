use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn lcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run lcp")
}

fn run_ok(args: &[&str]) -> Output {
    let out = lcp(args);
    assert!(
        out.status.success(),
        "lcp {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn repeated_runs_are_byte_identical_across_worker_counts() {
    let config = fixtures().join("config.toml");
    let config = config.to_str().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let printed = run_ok(&[
        "ensemble",
        "--config",
        config,
        "--workers",
        "1",
        "--out",
        a.path().to_str().unwrap(),
    ]);
    run_ok(&[
        "ensemble",
        "--config",
        config,
        "--workers",
        "4",
        "--out",
        b.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8(printed.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.ends_with("pred_ensemble.tsv")), "{stdout}");

    let fa = files_under(a.path());
    assert_eq!(fa, files_under(b.path()));
    for f in [
        "features_train.tsv",
        "model_full.json",
        "pred_ensemble.tsv",
        "manifests/train.json",
    ] {
        assert!(fa.contains(&PathBuf::from(f)), "{f} missing");
    }
    for f in &fa {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

#[test]
fn seed_flag_overrides_the_configured_seed() {
    let out = tempfile::tempdir().unwrap();
    let config = fixtures().join("config.toml");
    run_ok(&[
        "build-index",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "123",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    let stats = fs::read_to_string(out.path().join("index_stats.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&stats).unwrap();
    assert_eq!(v["stamp"]["seed"], "123");
    assert_eq!(v["content"]["documents"], 10000);
    let manifest = fs::read_to_string(out.path().join("manifests/build-index.json")).unwrap();
    assert!(manifest.contains("\"seed\": 123"), "{manifest}");
}

#[test]
fn evaluate_scores_an_arbitrary_predictions_file() {
    let out = tempfile::tempdir().unwrap();
    let config = fixtures().join("config.toml");
    let preds = fixtures().join("neural/oracle_predictions.tsv");
    let res = run_ok(&[
        "evaluate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    let text = String::from_utf8(res.stdout).unwrap();
    let overall = text.lines().find(|l| l.starts_with("overall")).unwrap();
    let cols: Vec<&str> = overall.split_whitespace().collect();
    assert_eq!(cols, ["overall", "60", "1.0000", "1.0000", "0.0000", "0.0000"]);
}

#[test]
fn failures_exit_non_zero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = lcp(&["extract", "--config", dir.path().join("none.toml").to_str().unwrap()]);
    assert!(!missing.status.success());
    let err = String::from_utf8_lossy(&missing.stderr);
    assert!(err.contains("error:") && err.contains("none.toml"), "{err}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nmystery = true\n").unwrap();
    let res = lcp(&["train", "--config", bad.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("mystery"));

    let usage = lcp(&["predict"]);
    assert!(!usage.status.success());
    assert!(String::from_utf8_lossy(&usage.stderr).contains("--config"));
}

#[test]
fn reference_config_is_a_valid_starting_point() {
    let out = run_ok(&["reference-config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let config = lcp_core::config::PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(config.ensemble.threshold, 0.59);
    assert_eq!(config.to_toml(), text);
}
