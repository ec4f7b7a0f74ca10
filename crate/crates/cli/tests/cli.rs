use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lotus::corpus::{write_dataset, Split};
use lotus::synthetic::{keyword_corpus, latent_cue_corpus};

fn lotus(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lotus"))
        .args(args)
        .current_dir(dir)
        .env_remove("LOTUS_CACHE")
        .output()
        .expect("spawn lotus")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Writes train/test CSVs and a config using the latent-cue stub backend.
fn fixture(dir: &Path) -> PathBuf {
    let corpus = latent_cue_corpus(120, 40, 9);
    write_dataset(&corpus.train, dir.join("train.csv")).unwrap();
    write_dataset(&corpus.test, dir.join("test.csv")).unwrap();
    let cues: Vec<_> = corpus
        .cue_map
        .iter()
        .map(|c| serde_json::json!({"keyword": c.keyword, "clause": c.clause}))
        .collect();
    let config = serde_json::json!({
        "mode": "text_plus_explanation",
        "train_path": "train.csv",
        "test_path": "test.csv",
        "backend": {"backend_id": "cues", "kind": "stub", "cue_map": cues},
        "train": {"epochs": 4},
        "run_seeds": [1, 2]
    });
    let path = dir.join("exp.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lotus(tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_subcommand_and_flag_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lotus(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(lotus(tmp.path(), &["run", "--nope"]).status.code(), Some(1));
    assert_eq!(lotus(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn stats_reports_counts_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, _) = keyword_corpus(50, 0, 1);
    write_dataset(&train, tmp.path().join("train.csv")).unwrap();
    let o = lotus(tmp.path(), &["stats", "--data", "train.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total"], 50);
    assert_eq!(v["split"], "train");
    let expected = lotus::corpus::label_distribution(&train);
    assert_eq!(v["counts"]["joy"], expected.counts.joy);
}

#[test]
fn bad_data_exits_1_with_diagnostic_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.csv"), "id,text,anger,fear,joy,surprise,sadness\n").unwrap();
    let o = lotus(tmp.path(), &["stats", "--data", "bad.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sadness"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn failing_backend_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, _) = keyword_corpus(5, 0, 1);
    write_dataset(&train, tmp.path().join("train.csv")).unwrap();
    std::fs::write(
        tmp.path().join("broken.json"),
        r#"{"backend_id": "broken", "kind": "external-command", "command": ["false"]}"#,
    )
    .unwrap();
    let o = lotus(tmp.path(), &["explain", "--data", "train.csv", "--backend", "broken.json"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn run_twice_gives_identical_aggregates_and_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    for out in ["a", "b"] {
        let o = lotus(tmp.path(), &["run", "--config", "exp.json", "--out", out, "--set", "train.epochs=3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for mode in ["text_only", "text_plus_explanation"] {
        let a = std::fs::read(tmp.path().join("a").join(mode).join("aggregate.json")).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(mode).join("aggregate.json")).unwrap();
        assert_eq!(a, b);
    }
    let resolved: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("a/resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["train"]["epochs"], 3);
    assert!(tmp.path().join("a/report.md").exists());
    assert!(tmp.path().join("a/cache/cues.jsonl").exists());

    // Rebuild the report as CSV from the stored artifacts.
    let o = lotus(tmp.path(), &["report", "--config", "exp.json", "--out", "a", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("a/report.csv")).unwrap();
    assert!(csv.starts_with("table,method,row,metric,mean,std,is_max\n"));
}

#[test]
fn cache_env_var_overrides_cache_path() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let o = Command::new(env!("CARGO_BIN_EXE_lotus"))
        .args(["explain", "--config", "exp.json", "--data", "test.csv", "--split", "test", "--out", "x"])
        .current_dir(tmp.path())
        .env("LOTUS_CACHE", "elsewhere.jsonl")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("elsewhere.jsonl").exists());
    assert!(!tmp.path().join("x/cache").exists());
    let rows = std::fs::read_to_string(tmp.path().join("x/explanations.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 40);
}

#[test]
fn train_predict_evaluate_chain() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let common = ["--config", "exp.json", "--out", "m", "--mode", "text_plus_explanation"];
    let o = lotus(tmp.path(), &[&["train"], &common[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = lotus(tmp.path(), &[&["predict", "--model", "m/model.json"], &common[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = lotus(tmp.path(), &["evaluate", "--config", "exp.json", "--predictions", "m/predictions.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["macro"]["f1"].as_f64().unwrap() > 0.5, "{v}");
}

#[test]
fn sample_seed_then_export_finetune() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let o = lotus(tmp.path(), &["sample-seed", "--data", "train.csv", "--n", "20", "--seed", "4", "--out", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let seed = lotus::corpus::parse_dataset(tmp.path().join("s/seed_corpus.csv"), Split::Train).unwrap();
    assert_eq!(seed.len(), 20);

    let o = lotus(
        tmp.path(),
        &["export-finetune", "--config", "exp.json", "--data", "s/seed_corpus.csv", "--out", "s"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (spec, pairs) = lotus::explainer::read_finetune_job(tmp.path().join("s/finetune_job.json")).unwrap();
    assert_eq!(pairs.len(), 20);
    assert_eq!(spec.batch_size, 2);
    assert_eq!(spec.seed_corpus_ref, PathBuf::from("s/seed_corpus.csv"));
}

#[test]
fn sample_seed_to_stdout_is_a_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, _) = keyword_corpus(30, 0, 2);
    write_dataset(&train, tmp.path().join("train.csv")).unwrap();
    let o = lotus(tmp.path(), &["sample-seed", "--data", "train.csv", "--n", "10"]);
    assert!(o.status.success());
    let ds = lotus::corpus::parse_dataset_from_reader(o.stdout.as_slice(), Path::new("<stdout>"), Split::Train).unwrap();
    assert_eq!(ds.len(), 10);
}
