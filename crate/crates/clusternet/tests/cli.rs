use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clusternet_core::losses::lambda_schedule;
use serde_json::Value;

fn clusternet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clusternet"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = clusternet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn blobs_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = d.join("blobs.csv");
    ok(&["make-blobs", "--per-cluster", "50", "--out", s(&csv)]);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 201);

    let data = ["--csv", s(&csv), "--csv-header", "--labeled-frac", "0.1"];
    let small = ["--hidden", "16", "--latent-dim", "4", "--lr", "0.001", "--batch-size", "64", "--labeled-per-batch", "8"];
    let pre = d.join("pre");
    ok(&[&["pretrain"][..], &data, &small, &["--pretrain-epochs", "5", "--out", s(&pre)]].concat());
    for f in ["pretrained.ckpt", "config.json", "metrics.jsonl"] {
        assert!(pre.join(f).is_file(), "{f}");
    }
    assert_eq!(json_lines(&pre.join("metrics.jsonl")).len(), 5);

    let run = d.join("run");
    let ckpt = pre.join("pretrained.ckpt");
    let summary = ok(&[&["train"][..], &data, &small,
        &["--finetune-epochs", "45", "--checkpoint", s(&ckpt), "--out", s(&run)]].concat());
    let summary: Value = serde_json::from_str(summary.trim()).unwrap();
    assert!(summary["holdout"]["nmi"].as_f64().unwrap() > 0.9, "{summary}");

    let log = json_lines(&run.join("metrics.jsonl"));
    let epochs: Vec<&Value> = log.iter().filter(|r| r["kind"] == "epoch").collect();
    assert_eq!(epochs.len(), 45);
    for (t, r) in epochs.iter().enumerate() {
        assert_eq!(r["lambda"].as_f64().unwrap(), lambda_schedule(t, 5, 40).unwrap());
    }
    assert_eq!(log.last().unwrap()["kind"], "eval");

    let centers = fs::read_to_string(run.join("centers.csv")).unwrap();
    assert_eq!(centers.lines().count(), 5);
    let config: Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["train"]["finetune_epochs"], 45);
    assert_eq!(config["network"]["latent_dim"], 4);

    let eval: Value = serde_json::from_str(ok(&["eval", "--run", s(&run), "--on", "labeled"]).trim()).unwrap();
    assert_eq!(eval["acc_direct"].as_f64().unwrap(), 100.0);
    let again = ok(&["eval", "--run", s(&run), "--on", "labeled"]);
    assert_eq!(serde_json::from_str::<Value>(again.trim()).unwrap(), eval);
    let train_nmi = epochs.last().unwrap()["nmi"].as_f64().unwrap();
    let hold: Value = serde_json::from_str(ok(&["eval", "--run", s(&run)]).trim()).unwrap();
    assert!((hold["nmi"].as_f64().unwrap() - train_nmi).abs() <= 0.05);

    let emb = d.join("emb.csv");
    ok(&["export-embeddings", "--run", s(&run), "--on", "holdout", "--out", s(&emb)]);
    let text = fs::read_to_string(&emb).unwrap();
    assert_eq!(text.lines().next().unwrap(), "z0,z1,z2,z3,label,cluster");
    assert_eq!(text.lines().count(), 1 + 20);
}

#[test]
fn baselines_on_raw_blobs() {
    let out = ok(&["baseline", "--blobs", "4,200,2,0.3,0", "--labeled-frac", "0.05"]);
    let records: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    for r in &records {
        assert!(r["nmi"].as_f64().unwrap() >= 0.99, "{r}");
    }
    let methods: Vec<&Value> = records.iter().map(|r| &r["method"]).collect();
    assert_eq!(methods, ["kmeans_raw", "constrained_kmeans_raw"]);
    let all_labeled = clusternet(&["baseline", "--blobs", "3,30,2,0.3,1", "--labeled-frac", "1", "--holdout-frac", "0"]);
    assert_eq!(all_labeled.status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"data": {"source": {"kind": "blobs", "k": 3, "per_cluster": 20, "dim": 2, "spread": 0.3, "seed": 1}},
                        "train": {"pretrain_epochs": 2, "batch_size": 32, "seed": 9}}"#).unwrap();
    let out = dir.path().join("pre");
    ok(&["pretrain", "--config", s(&cfg), "--pretrain-epochs", "1", "--hidden", "8", "--out", s(&out)]);
    let resolved: Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["train"]["pretrain_epochs"], 1);
    assert_eq!(resolved["train"]["batch_size"], 32);
    assert_eq!(resolved["train"]["seed"], 9);
    assert_eq!(resolved["data"]["source"]["k"], 3);
    assert_eq!(json_lines(&out.join("metrics.jsonl")).len(), 1);
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(clusternet(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(clusternet(&["pretrain", "--blobs", "4,oops", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(clusternet(&["pretrain", "--t1", "40", "--out", s(&out)]).status.code(), Some(1));
    let missing = dir.path().join("missing.csv");
    assert_eq!(clusternet(&["pretrain", "--csv", s(&missing), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(clusternet(&["eval", "--run", s(&out)]).status.code(), Some(2));
    assert_eq!(clusternet(&["--help"]).status.code(), Some(0));

    let pre = dir.path().join("pre");
    ok(&["pretrain", "--blobs", "3,20,2,0.3,0", "--hidden", "8", "--pretrain-epochs", "1", "--out", s(&pre)]);
    let mismatch = clusternet(&["train", "--blobs", "3,20,2,0.3,0", "--hidden", "9", "--finetune-epochs", "1",
        "--checkpoint", s(&pre.join("pretrained.ckpt")), "--out", s(&out)]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("does not match"));
}

#[test]
fn repeats_write_one_directory_per_seed_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rep");
    ok(&["train", "--blobs", "3,30,2,0.3,0", "--hidden", "8", "--latent-dim", "3", "--batch-size", "32",
        "--labeled-per-batch", "8", "--pretrain-epochs", "2", "--finetune-epochs", "3", "--repeats", "2", "--out", s(&out)]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
    assert_eq!(summary["runs"][1]["split_seed"], 1);
    for i in 0..2 {
        assert!(out.join(format!("run-{i}/model.ckpt")).is_file());
    }
}
