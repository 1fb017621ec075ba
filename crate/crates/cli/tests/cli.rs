//! Exit codes and outputs of the `smm` binary.

use std::path::Path;
use std::process::{Command, Output};

fn smm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smm")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A short run with addition from step 500, trained into `dir`.
fn short_run(dir: &Path) {
    let config = dir.join("short.json");
    std::fs::write(&config, r#"{"total_steps": 3000, "add_onset": 500}"#).unwrap();
    let run = dir.join("run");
    let out = smm(&["--quiet", "train", "--config", s(&config), "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn train_writes_artifacts_and_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.json");
    std::fs::write(&config, r#"{"total_steps": 2000, "add_onset": 500}"#).unwrap();
    let out = smm(&["train", "--config", s(&config), "--out", s(tmp.path()), "--seed", "9"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("final addition accuracy"), "{text}");
    for f in ["trials.jsonl", "metrics.csv", "snapshots.csv", "checkpoint.json", "config.json", "summary.json"] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["seed"], 9);
}

#[test]
fn configuration_problems_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    for (json, key) in [
        (r#"{"sigma": 0}"#, "sigma"),
        (r#"{"no_such_key": 1}"#, "no_such_key"),
        (r#"{"probes": ["4>?"]}"#, "probes"),
    ] {
        std::fs::write(&bad, json).unwrap();
        let out = smm(&["train", "--config", s(&bad), "--out", s(&tmp.path().join("x"))]);
        assert_eq!(code(&out), 2, "{json}");
        assert!(stderr(&out).contains(key), "{json}: {}", stderr(&out));
    }
    let out = smm(&["train", "--config", s(&tmp.path().join("missing.json"))]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&smm(&["train", "--bogus"])), 2);
    assert_eq!(code(&smm(&["gradcheck", "--trials", "0"])), 2);
}

#[test]
fn diverging_training_exits_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.json");
    std::fs::write(&config, r#"{"total_steps": 1000, "add_onset": 0, "learning_rate": 1e300}"#).unwrap();
    let out = smm(&["train", "--config", s(&config), "--out", s(tmp.path())]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(tmp.path().join("error.json").is_file());
}

#[test]
fn probe_and_export_read_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    short_run(tmp.path());
    let checkpoint = tmp.path().join("run").join("checkpoint.json");

    let out = smm(&["probe", s(&checkpoint), "2+1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let json: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(json["problem"], "2+1");
    let probs: Vec<f64> = json["distribution"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(probs.len(), 10);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let argmax = json["argmax"].as_u64().unwrap() as usize;
    assert!(probs.iter().all(|p| *p <= probs[argmax - 1]));

    let out = smm(&["probe", s(&checkpoint), "4>?"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&smm(&["probe", s(&tmp.path().join("none.json")), "1+1"])), 1);

    let csv_path = tmp.path().join("embed.csv");
    let out = smm(&["--quiet", "export-embeddings", s(&checkpoint), s(&csv_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 22);
    assert!(lines[0].starts_with("token,dim1,"));
    assert_eq!(lines[0].split(',').count(), 17);
    assert!(lines[11].starts_with("token,cos1,"));
    for (i, line) in lines[12..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 11);
        assert_eq!(cells[0], (i + 1).to_string());
        let diag: f64 = cells[i + 1].parse().unwrap();
        assert!((diag - 1.0).abs() < 1e-9, "{diag}");
        for c in &cells[1..] {
            let v: f64 = c.parse().unwrap();
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
        }
    }
}

#[test]
fn plot_checks_its_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    short_run(tmp.path());
    let run = tmp.path().join("run");

    let out = smm(&["plot", s(&run), "fig1b"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(run.join("fig1b_usage.svg").is_file());
    assert!(!run.join("fig1a_accuracy.svg").exists());

    assert_eq!(code(&smm(&["plot", s(&run), "fig3"])), 2);
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = smm(&["plot", s(&empty)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no run directories"), "{}", stderr(&out));
    assert_eq!(code(&smm(&["plot", s(&tmp.path().join("nowhere"))])), 1);
}

#[test]
fn sweep_writes_an_aggregate_and_reports_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"base": {"total_steps": 1500}, "onsets": [0, 500], "seeds": [1], "parallelism": 1}"#,
    )
    .unwrap();
    let root = tmp.path().join("ok");
    let out = smm(&["--quiet", "sweep", "--spec", s(&spec), "--out", s(&root)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let aggregate = std::fs::read_to_string(root.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 3);
    assert!(root.join("onset500_seed1").join("metrics.csv").is_file());

    let out = smm(&["plot", s(&root), "fig2"]);
    assert_eq!(code(&out), 1);

    std::fs::write(
        &spec,
        r#"{"base": {"total_steps": 500, "learning_rate": 1e300}, "onsets": [0], "seeds": [1, 2]}"#,
    )
    .unwrap();
    let out = smm(&["--quiet", "sweep", "--spec", s(&spec), "--out", s(&tmp.path().join("bad"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("2 of 2 runs failed"), "{}", stderr(&out));

    std::fs::write(&spec, r#"{"onsets": []}"#).unwrap();
    assert_eq!(code(&smm(&["sweep", "--spec", s(&spec)])), 2);
}
