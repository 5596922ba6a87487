mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::TINY_TOML;

fn mvpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvpose"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mvpose(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_doc(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap();
    serde_json::from_str(line).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("tiny.toml");
    std::fs::write(&config, TINY_TOML).unwrap();
    let (data, s1, s2, work) = (root.join("data"), root.join("s1"), root.join("s2"), root.join("work"));

    let msg = ok(&["synth", "--config", s(&config), "--out", s(&data)]);
    assert!(msg.contains("36 sequences"), "{msg}");
    ok(&["train-2d", "--config", s(&config), "--data", s(&data), "--out", s(&s1), "--seed", "3"]);
    assert!(s1.join("perceptron.ckpt").exists() && s1.join("train_2d.json").exists());
    let ckpt = s1.join("perceptron.ckpt");
    ok(&[
        "train-3d", "--config", s(&config), "--data", s(&data), "--perceptron", s(&ckpt), "--out", s(&s2),
        "--variant", "heatmaps+skips", "--views", "0,1",
    ]);
    let integrator = s2.join("integrator.ckpt");
    let line = ok(&[
        "eval", "--data", s(&data), "--perceptron", s(&ckpt), "--integrator", s(&integrator), "--out", s(&work),
        "--name", "skips",
    ]);
    assert!(line.contains("MPJPE"), "{line}");
    assert!(work.join("eval/skips.json").exists());

    let report = root.join("report");
    ok(&["report", "--from", s(&work), "--out", s(&report)]);
    let table = std::fs::read_to_string(report.join("metrics.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "experiment,subject,n_frames,mpjpe_mm,variance_mm2,std_mm");
    assert_eq!(table.lines().count(), 1 + 2);
    assert!(report.join("chart_experiments.svg").exists());
}

#[test]
fn synth_is_reproducible_and_refuses_to_clobber() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, TINY_TOML).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--config", s(&config), "--out", s(&a)]);
    ok(&["synth", "--config", s(&config), "--out", s(&b)]);
    assert_eq!(std::fs::read(a.join("index.json")).unwrap(), std::fs::read(b.join("index.json")).unwrap());
    let again = mvpose(&["synth", "--config", s(&config), "--out", s(&a)]);
    assert_eq!(again.status.code(), Some(2));
    assert_eq!(error_doc(&again)["error"]["category"], "config");
    ok(&["synth", "--config", s(&config), "--out", s(&a), "--overwrite"]);
}

#[test]
fn failures_report_a_category_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[stage1]\nepochs = 0\n").unwrap();
    let out = mvpose(&["synth", "--config", s(&bad), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let doc = error_doc(&out);
    assert_eq!(doc["error"]["category"], "config");
    assert!(doc["error"]["message"].as_str().unwrap().contains("bad.toml"));

    let missing = dir.path().join("nowhere");
    let out = mvpose(&["train-2d", "--data", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_doc(&out)["error"]["category"], "io");

    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let data = dir.path().join("data");
    let tiny = dir.path().join("tiny.toml");
    std::fs::write(&tiny, common::TINY_TOML).unwrap();
    ok(&["synth", "--config", s(&tiny), "--out", s(&data)]);
    let out = mvpose(&["eval", "--data", s(&data), "--perceptron", s(&junk), "--integrator", s(&junk), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(7));
    assert_eq!(error_doc(&out)["error"]["category"], "checkpoint");
}
