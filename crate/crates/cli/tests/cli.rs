use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trigwarn::config::{EncoderKind, RunConfig};
use trigwarn_core::corpus::write_corpus;
use trigwarn_core::synthetic::{generate, ClassSpec, SyntheticConfig};
use trigwarn_core::TriggerClass;

fn synthetic(n: usize, seed: u64, prefix: &str) -> trigwarn_core::corpus::Corpus {
    generate(&SyntheticConfig {
        n_documents: n,
        min_words: 80,
        max_words: 320,
        classes: vec![
            ClassSpec { class: TriggerClass::from_number(1).unwrap(), prevalence: 0.5 },
            ClassSpec { class: TriggerClass::from_number(5).unwrap(), prevalence: 0.3 },
            ClassSpec { class: TriggerClass::from_number(18).unwrap(), prevalence: 0.2 },
        ],
        marker_rate: 0.15,
        markers_per_class: 2,
        vocabulary_size: 300,
        id_prefix: prefix.into(),
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Writes train/valid corpora and a reference-encoder config under `root`.
fn fixture(root: &Path) -> PathBuf {
    write_corpus(&root.join("train.jsonl"), &synthetic(60, 1, "tr")).unwrap();
    write_corpus(&root.join("valid.jsonl"), &synthetic(30, 2, "va")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.paths.train = Some(root.join("train.jsonl"));
    cfg.paths.valid = Some(root.join("valid.jsonl"));
    cfg.paths.workdir = root.join("work");
    cfg.encoder.kind = EncoderKind::Reference;
    cfg.encoder.reference_dim = 64;
    cfg.heads.config.hidden_size = 16;
    cfg.heads.config.learning_rate = 0.2;
    cfg.heads.config.max_epochs = 3;
    cfg.heads.allow_degenerate = true;
    let path = root.join("run.toml");
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    path
}

fn trigwarn(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trigwarn"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{stdout}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn run_stages(config: &Path) {
    for stage in ["segment", "embed", "train-heads", "predict"] {
        ok(&trigwarn(config, &[stage]));
    }
}

#[test]
fn staged_run_produces_predictions_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    run_stages(&config);
    let work = tmp.path().join("work");
    assert!(work.join("predictions/heads-valid.jsonl").is_file());
    let table = ok(&trigwarn(&config, &["evaluate"]));
    assert!(table.contains("Multi-label"), "{table}");
    assert!(table.contains("pornographic"), "{table}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(work.join("reports/heads-valid.metrics.json")).unwrap()).unwrap();
    assert_eq!(report["per_class"].as_array().unwrap().len(), 32);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(work.join("manifest.json")).unwrap()).unwrap();
    for stage in ["segment", "embed", "train-heads", "predict"] {
        assert!(manifest["stages"][stage]["key"].is_string(), "{stage} missing from manifest");
    }
    assert_eq!(manifest["config"]["heads"]["max_epochs"], 3);
    assert!(!work.join(".lock").exists());
}

#[test]
fn unchanged_rerun_is_up_to_date() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    run_stages(&config);
    let store = tmp.path().join("work/embeddings/train.bin");
    let before = std::fs::metadata(&store).unwrap().modified().unwrap();
    let out = ok(&trigwarn(&config, &["embed"]));
    assert_eq!(out.trim(), "embed: up to date");
    assert_eq!(std::fs::metadata(&store).unwrap().modified().unwrap(), before);
    assert_eq!(ok(&trigwarn(&config, &["train-heads"])).trim(), "train-heads: up to date");
}

#[test]
fn changed_segmentation_makes_downstream_stale() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    run_stages(&config);
    let out = trigwarn(&config, &["--segment-length", "120", "train-heads"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage `segment` is stale"), "{err}");
    assert!(err.contains("rerun `trigwarn segment`"), "{err}");

    // after resegmenting, the next stale stage is embed
    ok(&trigwarn(&config, &["--segment-length", "120", "segment"]));
    let out = trigwarn(&config, &["--segment-length", "120", "train-heads"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `embed` is stale"));
}

#[test]
fn tampered_output_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    run_stages(&config);
    std::fs::write(tmp.path().join("work/embeddings/valid.bin"), b"garbage").unwrap();
    let out = trigwarn(&config, &["predict"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage `embed` is stale") && err.contains("was modified"), "{err}");
}

#[test]
fn identical_runs_give_identical_predictions() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ca, cb) = (fixture(a.path()), fixture(b.path()));
    run_stages(&ca);
    run_stages(&cb);
    let read = |d: &Path| std::fs::read(d.join("work/predictions/heads-valid.jsonl")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn exit_codes_distinguish_usage_data_and_success() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    // overlap must be below segment length
    let out = trigwarn(&config, &["--overlap", "200", "segment"]);
    assert_eq!(out.status.code(), Some(1));
    let out = trigwarn(&config, &["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    // missing corpus file
    let out = trigwarn(&config, &["--train", "/nonexistent/train.jsonl", "segment"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // downstream stage before anything ran
    let out = trigwarn(&config, &["embed"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `segment` is stale"));
}

#[test]
fn stats_prints_class_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let out = ok(&trigwarn(&config, &["stats"]));
    assert!(out.contains("documents: 60"), "{out}");
    assert!(out.contains("kidnapping"), "{out}");
    assert!(tmp.path().join("work/reports/stats-train.json").is_file());

    let empty = tmp.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = trigwarn(&config, &["stats", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_accepts_any_predictions_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    // perfect predictions written by hand
    let truth = synthetic(30, 2, "va");
    let lines: String = truth
        .iter()
        .map(|d| format!("{{\"work_id\":\"{}\",\"labels\":{}}}\n", d.id, serde_json::to_string(&d.labels.unwrap()).unwrap()))
        .collect();
    let preds = tmp.path().join("gold.jsonl");
    std::fs::write(&preds, lines).unwrap();
    let report = tmp.path().join("gold.metrics.json");
    ok(&trigwarn(
        &config,
        &[
            "evaluate",
            "--predictions",
            preds.to_str().unwrap(),
            "--truth",
            tmp.path().join("valid.jsonl").to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ],
    ));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["overall"]["f1_micro"], 1.0);
    assert_eq!(r["overall_present"]["f1_macro"], 1.0);
}

#[test]
fn tfidf_gbt_baseline_runs_after_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let out = trigwarn(&config, &["baseline", "tfidf-gbt"]);
    assert_eq!(out.status.code(), Some(3));
    ok(&trigwarn(&config, &["segment"]));
    let out = ok(&trigwarn(&config, &["baseline", "tfidf-gbt"]));
    assert!(out.starts_with("baseline tfidf-gbt: valid 30 documents"), "{out}");
    assert_eq!(ok(&trigwarn(&config, &["baseline", "tfidf-gbt"])).trim(), "baseline tfidf-gbt: up to date");
    assert!(tmp.path().join("work/predictions/tfidf-gbt-valid.jsonl").is_file());
}

#[test]
fn pretrained_encoder_path_with_small_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let mut cfg = RunConfig::load(&config).unwrap();
    let train = trigwarn_core::corpus::load_corpus(&tmp.path().join("train.jsonl"), true).unwrap();
    let model = trigwarn::presets::write_tiny_checkpoint(&tmp.path().join("tiny"), &train, &cfg.cleaning, 3).unwrap();
    cfg.encoder.kind = EncoderKind::Pretrained;
    cfg.encoder.fine_tune.model_name = "tiny".into();
    cfg.encoder.fine_tune.max_tokens = 64;
    cfg.encoder.fine_tune.epochs = 1;
    cfg.paths.cache_dir = Some(tmp.path().to_path_buf());
    assert_eq!(cfg.checkpoint_dir("tiny"), model);
    std::fs::write(&config, toml::to_string(&cfg).unwrap()).unwrap();

    ok(&trigwarn(&config, &["segment"]));
    let out = trigwarn(&config, &["embed"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `train-encoder` is stale"));
    ok(&trigwarn(&config, &["train-encoder"]));
    let work = tmp.path().join("work");
    assert!(work.join("encoder/training_log.json").is_file());
    ok(&trigwarn(&config, &["embed"]));
    ok(&trigwarn(&config, &["baseline", "segment"]));
    assert!(work.join("predictions/segment-valid.jsonl").is_file());

    // a missing checkpoint is a data error that names the directory
    let out = trigwarn(&config, &["baseline", "truncation"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bert-base-uncased"));
}
