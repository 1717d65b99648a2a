use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use commentq_core::corpus::{save_corpus, Format};
use commentq_core::synth::{synthesize, SynthConfig};
use serde_json::Value;

fn commentq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commentq"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = commentq(dir, args);
    assert!(
        out.status.success(),
        "commentq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Corpus, featurizer and a linear model in `dir`.
fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = synthesize(&SynthConfig::new("small", 60, 40, 8)).unwrap();
    save_corpus(&corpus, &dir.join("corpus.jsonl"), Format::Jsonl).unwrap();
    ok(dir, &["featurize", "--corpus", "corpus.jsonl", "--dim", "1024", "--out", "feat.json"]);
    ok(
        dir,
        &["train", "--corpus", "corpus.jsonl", "--featurizer", "feat.json", "--model", "linear-svm", "--out", "model.json"],
    );
    (dir.join("feat.json"), dir.join("model.json"))
}

const SWAP: &str = r#"{"id": "swap", "comment": "/* Swap two values */", "code": "void swapValues(int *a, int *b) {\n    int temp = *a;\n    *a = *b;\n    *b = temp;\n}", "note": "kept"}"#;

#[test]
fn classify_preserves_fields_and_adds_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    fs::write(d.join("in.jsonl"), format!("{SWAP}\n\n")).unwrap();
    ok(d, &["classify", "--model", "model.json", "--featurizer", "feat.json", "--input", "in.jsonl", "--out", "pred.jsonl"]);
    let text = fs::read_to_string(d.join("pred.jsonl")).unwrap();
    let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r["id"], "swap");
    assert_eq!(r["note"], "kept");
    assert!(["Useful", "Not Useful"].contains(&r["predicted_label"].as_str().unwrap()));
    assert!(r["score"].as_f64().unwrap().is_finite());
}

#[test]
fn classify_empty_input_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    fs::write(d.join("empty.jsonl"), "").unwrap();
    let out = ok(d, &["classify", "--model", "model.json", "--featurizer", "feat.json", "--input", "empty.jsonl", "--out", "pred.jsonl"]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(d.join("pred.jsonl")).unwrap(), b"");
}

#[test]
fn classify_rejects_corrupt_model_and_foreign_featurizer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    fs::write(d.join("in.jsonl"), format!("{SWAP}\n")).unwrap();
    let text = fs::read_to_string(d.join("model.json")).unwrap();
    fs::write(d.join("broken.json"), &text[..text.len() / 2]).unwrap();
    let out = commentq(d, &["classify", "--model", "broken.json", "--featurizer", "feat.json", "--input", "in.jsonl"]);
    assert_ne!(code(&out), 0);

    ok(d, &["featurize", "--corpus", "corpus.jsonl", "--dim", "2048", "--out", "other.json"]);
    let out = commentq(d, &["classify", "--model", "model.json", "--featurizer", "other.json", "--input", "in.jsonl"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));
}

#[test]
fn eval_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    for condition in ["seed", "integrated"] {
        ok(
            d,
            &[
                "eval", "--model", "model.json", "--featurizer", "feat.json", "--corpus", "corpus.jsonl",
                "--condition", condition, "--out", &format!("{condition}/linear.json"),
            ],
        );
    }
    ok(d, &["report", "--seed-reports", "seed", "--integrated-reports", "integrated", "--out", "table.json"]);
    let table: Value = serde_json::from_str(&fs::read_to_string(d.join("table.json")).unwrap()).unwrap();
    assert_eq!(table["rows"][0]["model_name"], "Linear SVM");
    let out = commentq(d, &["report", "--seed-reports", "seed", "--integrated-reports", "integrated", "--out", "table.csv"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn split_writes_three_parts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    ok(d, &["split", "--corpus", "corpus.jsonl", "--test", "20", "--validation", "0.1", "--seed", "3", "--out", "parts"]);
    let count = |f: &str| fs::read_to_string(d.join("parts").join(f)).unwrap().lines().count();
    assert_eq!(count("test.jsonl"), 20);
    assert_eq!(count("validation.jsonl"), 10);
    assert_eq!(count("train.jsonl"), 70);
}

#[test]
fn extract_writes_unlabeled_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("src")).unwrap();
    fs::write(d.join("src/a.c"), "/* one */\nint a;\n// two\nint b;\n").unwrap();
    ok(d, &["extract", "--root", "src", "--out", "pairs.jsonl"]);
    let lines: Vec<Value> = fs::read_to_string(d.join("pairs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["label"], Value::Null);
    assert_eq!(lines[0]["source"], "extracted");
}

#[test]
fn kappa_from_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["kappa", "--table", "70,10,5,15"]);
    let k: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((k - 0.571_428_571_428_571_4).abs() < 1e-9);
    fs::write(d.join("ann.csv"), "a,b\nUseful,Useful\nnot useful,Not Useful\n").unwrap();
    let out = ok(d, &["kappa", "--annotations", "ann.csv"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
    fs::write(d.join("bad.csv"), "a,b\nUseful,perhaps\n").unwrap();
    assert_eq!(code(&commentq(d, &["kappa", "--annotations", "bad.csv"])), 3);
}

#[test]
fn init_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["init-config", "--out", "config.toml"]);
    let text = fs::read_to_string(d.join("config.toml")).unwrap();
    assert!(text.contains("seed_corpus"));
    trained(d);
    ok(d, &["--config", "config.toml", "featurize", "--corpus", "corpus.jsonl", "--dim", "512", "--out", "f.json"]);
}

#[test]
fn augment_with_mock_script_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    let script = serde_json::json!([
        "```\n/* add */\n```\n```c\nint add(int a, int b) { return a + b; }\n```",
        "not fenced",
        "```\n/* sub */\n```\n```c\nint sub(int a, int b) { return a - b; }\n```",
        "Useful",
        "Not Useful"
    ]);
    fs::write(d.join("script.json"), script.to_string()).unwrap();
    for run in ["a", "b"] {
        ok(
            d,
            &[
                "augment", "--base", "corpus.jsonl", "--count", "3", "--mock-script", "script.json",
                "--out", &format!("{run}.jsonl"), "--stats", &format!("{run}.stats.json"),
                "--transcript", &format!("{run}.prompts.json"),
            ],
        );
    }
    for suffix in [".jsonl", ".stats.json", ".prompts.json"] {
        assert_eq!(fs::read(d.join(format!("a{suffix}"))).unwrap(), fs::read(d.join(format!("b{suffix}"))).unwrap());
    }
    let stats: Value = serde_json::from_str(&fs::read_to_string(d.join("a.stats.json")).unwrap()).unwrap();
    assert_eq!(stats["merged"], 2);
    assert_eq!(stats["discarded"], 1);
    assert_eq!(fs::read_to_string(d.join("a.jsonl")).unwrap().lines().count(), 102);
}

#[test]
fn exit_codes_distinguish_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);

    // config
    fs::write(d.join("bad.toml"), "[featurizer]\ndim = 1000\n").unwrap();
    assert_eq!(code(&commentq(d, &["--config", "bad.toml", "featurize", "--corpus", "corpus.jsonl", "--out", "x.json"])), 2);
    assert_eq!(code(&commentq(d, &["train", "--corpus", "corpus.jsonl", "--featurizer", "feat.json", "--model", "rbf-svm", "--out", "m.json"])), 2);

    // data
    fs::write(d.join("broken.jsonl"), "{not json}\n").unwrap();
    assert_eq!(code(&commentq(d, &["featurize", "--corpus", "broken.jsonl", "--out", "x.json"])), 3);

    // training
    let one_class = synthesize(&SynthConfig::new("one", 10, 0, 1)).unwrap();
    save_corpus(&one_class, &d.join("one.jsonl"), Format::Jsonl).unwrap();
    assert_eq!(
        code(&commentq(d, &["train", "--corpus", "one.jsonl", "--featurizer", "feat.json", "--model", "linear-svm", "--out", "m.json"])),
        4
    );

    // transport
    fs::write(d.join("fast.toml"), "[augmentation.generation]\nmax_retries = 1\nbackoff_ms = 1\ntimeout_secs = 2.0\n").unwrap();
    let out = commentq(
        d,
        &["--config", "fast.toml", "augment", "--base", "corpus.jsonl", "--count", "1", "--endpoint", "http://127.0.0.1:9", "--out", "aug.jsonl"],
    );
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));

    // io
    assert_eq!(code(&commentq(d, &["featurize", "--corpus", "absent.jsonl", "--out", "x.json"])), 1);
}
