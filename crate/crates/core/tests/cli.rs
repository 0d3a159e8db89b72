//! The binary end to end: every subcommand on a tiny synthetic benchmark,
//! and the error JSON contract.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
    "synth": {"train_clips": 16, "dev_clips": 8, "test_clips": 8, "corpus_clips": 16},
    "train": {"steps": 20},
    "student": {"family": "conv-resnet-like", "depth": 1, "width": 4}
}"#;

fn cli(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embdistill"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_config(workdir: &Path, args: &[&str]) -> Output {
    let cfg = workdir.join("config.json");
    let mut full = vec!["--config", cfg.to_str().unwrap()];
    full.extend_from_slice(args);
    cli(workdir, &full)
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

#[test]
fn usage_errors_exit_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = cli(dir.path(), &["probe", "--model", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = cli(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn run_errors_exit_1_with_kind() {
    let dir = tempfile::tempdir().unwrap();
    let wd = dir.path();

    std::fs::write(wd.join("bad.json"), r#"{"sede": 3}"#).unwrap();
    let out = cli(wd, &["--config", wd.join("bad.json").to_str().unwrap(), "synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "json");

    std::fs::write(wd.join("config.json"), TINY).unwrap();
    let out = with_config(wd, &["embed", "--model", "teacher", "--task", "pitch"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"].as_str().unwrap().len() > 0);

    stdout_json(&with_config(wd, &["synth"]));
    let out = with_config(wd, &["probe", "--model", "nobody", "--task", "pitch"]);
    let err = stderr_json(&out);
    assert_eq!(err["error"], "unknown_model");
    assert!(err["message"].as_str().unwrap().contains("nobody"));

    let out = with_config(wd, &["embed", "--model", "teacher", "--task", "pitch", "--advance", "0"]);
    assert_eq!(stderr_json(&out)["error"], "framing");

    let out = with_config(
        wd,
        &["report", "--models", "teacher", "--tasks", "pitch", "--out", "r", "--ab", "broken"],
    );
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn full_flow_on_a_tiny_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let wd = dir.path();
    std::fs::write(wd.join("config.json"), TINY).unwrap();

    let synth = stdout_json(&with_config(wd, &["synth"]));
    let tasks: Vec<&str> = synth["tasks"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert_eq!(tasks, ["pitch", "brightness", "spoof", "teacher-sign"]);
    assert!(wd.join("tasks/pitch/manifest.jsonl").exists());
    assert!(wd.join("corpora/source-a/manifest.jsonl").exists());

    for (id, group, corpus) in [("a0", "a", "source-a"), ("b0", "b", "source-b"), ("a1", "a", "source-a"), ("b1", "b", "source-b")] {
        let key = &id[1..];
        let out = stdout_json(&with_config(
            wd,
            &["distill", "--model-id", id, "--corpus", corpus, "--group", group, "--pair-key", key, "--seed", key],
        ));
        assert_eq!(out["model_id"], id);
        assert!(wd.join(format!("models/{id}.bin")).exists());
        assert!(wd.join(format!("models/{id}.loss.csv")).exists());
    }

    let cold = stdout_json(&with_config(wd, &["embed", "--model", "a0", "--task", "pitch"]));
    assert_eq!(cold["cache_hit"], false);
    assert_eq!(cold["clips"], 32);
    assert_eq!(cold["dims"], 64);
    let warm = stdout_json(&with_config(wd, &["embed", "--model", "a0", "--task", "pitch"]));
    assert_eq!(warm["cache_hit"], true);
    assert_eq!(warm["fingerprint"], cold["fingerprint"]);
    let other = stdout_json(&with_config(wd, &["embed", "--model", "a0", "--task", "pitch", "--advance", "1.0"]));
    assert_eq!(other["cache_hit"], false);
    assert_ne!(other["fingerprint"], cold["fingerprint"]);

    let models = ["teacher", "a0", "b0", "a1", "b1"];
    for m in models {
        for t in &tasks {
            let row = stdout_json(&with_config(wd, &["probe", "--model", m, "--task", t]));
            assert_eq!(row["selected"], true);
            assert!(row["test_score"].is_number());
        }
    }
    let sweep = stdout_json(&with_config(
        wd,
        &["sweep-advance", "--model", "teacher", "--task", "pitch", "--advances", "0.5,1,2"],
    ));
    assert_eq!(sweep.as_array().unwrap().len(), 3);
    assert!(wd.join("probes/teacher__pitch.sweep.csv").exists());

    let report = stdout_json(&with_config(
        wd,
        &[
            "report",
            "--models",
            &models.join(","),
            "--tasks",
            &tasks.join(","),
            "--out",
            "report",
            "--ab",
            "corpus:a:b",
        ],
    ));
    assert_eq!(report["models"], 5);
    for f in ["report.json", "ttest.json", "table.csv", "curve.csv", "kendall.csv", "robustness.csv"] {
        assert!(wd.join("report").join(f).exists(), "{f} missing");
    }
    let full: Value = serde_json::from_slice(&std::fs::read(wd.join("report/report.json")).unwrap()).unwrap();
    let ab = &full["ab_tests"][0];
    assert_eq!(ab["pairs"].as_array().unwrap().len(), 2);
    assert!(ab["test"]["p_value"].is_number());
    let sizes: Vec<u64> = full["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["param_count"].as_u64().unwrap())
        .collect();
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(full["models"].as_array().unwrap().last().unwrap()["model_id"], "teacher");
}
