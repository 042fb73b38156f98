//! Black-box tests of the command-line surface: flags, exit codes, file
//! outputs, and the metrics JSON schema.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use seqlab::corpus::{load_conll, parse_conll};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqlab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth(path: &Path, profile: &str, sentences: usize, seed: u64) {
    let out = bin()
        .args([
            "synth",
            "--profile",
            profile,
            "--sentences",
            &sentences.to_string(),
            "--seed",
            &seed.to_string(),
        ])
        .arg("--out")
        .arg(path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluate_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.conll");
    synth(&gold, "local", 8, 3);
    let out = bin()
        .args(["evaluate"])
        .arg("--gold")
        .arg(&gold)
        .arg("--pred")
        .arg(&gold)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("precision      1.0000"), "{text}");
    assert!(text.contains("recall         1.0000"), "{text}");
    assert!(text.contains("f1             1.0000"), "{text}");
}

#[test]
fn evaluate_json_matches_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.conll");
    synth(&gold, "local", 8, 3);
    let out = bin()
        .args(["evaluate", "--json"])
        .arg("--gold")
        .arg(&gold)
        .arg("--pred")
        .arg(&gold)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["precision"].is_f64() || v["precision"].is_u64());
    assert!(v["recall"].is_f64() || v["recall"].is_u64());
    assert!(v["f1"].is_f64() || v["f1"].is_u64());
    assert!(v["per_label"].is_object());
    for (_, entry) in v["per_label"].as_object().unwrap() {
        for field in ["precision", "recall", "f1", "tp", "fp", "fn"] {
            assert!(!entry[field].is_null(), "missing per-label field {field}");
        }
    }
    assert!(v["config"].is_object());
    assert_eq!(v["config"]["scheme"], "BIO");
}

#[test]
fn unknown_flag_is_usage_error_on_stderr() {
    let out = run(&["evaluate", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-such-flag"));
}

#[test]
fn missing_file_is_data_error() {
    let out = run(&["evaluate", "--gold", "/nonexistent.conll", "--pred", "/nonexistent.conll"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_corpus_is_data_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conll");
    fs::write(&bad, "token without tab\n").unwrap();
    let out = bin()
        .args(["evaluate"])
        .arg("--gold")
        .arg(&bad)
        .arg("--pred")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn gradcheck_lstm_seed_7_exits_zero() {
    let out = run(&["gradcheck", "--arch", "lstm", "--seed", "7", "--seeds", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
}

#[test]
fn predict_output_reparses_and_preserves_structure() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.conll");
    let input = dir.path().join("input.conll");
    synth(&train, "local", 20, 4);
    synth(&input, "local", 6, 9);
    let model = dir.path().join("model.seqlab");
    let out = bin()
        .args([
            "train", "--arch", "lstm", "--hidden", "6", "--dim", "5", "--epochs", "2", "--lr",
            "0.2", "--seed", "1",
        ])
        .arg("--train")
        .arg(&train)
        .arg("--out")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    // run manifest lands alongside the model
    let manifest_path = format!("{}.run.json", model.display());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["arch"], "lstm");
    assert!(manifest["input_digests"]["train"].is_string());

    let pred = dir.path().join("pred.conll");
    let out = bin()
        .args(["predict"])
        .arg("--model")
        .arg(&model)
        .arg("--input")
        .arg(&input)
        .arg("--out")
        .arg(&pred)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let input_docs = load_conll(&input).unwrap();
    let pred_docs = load_conll(&pred).unwrap();
    assert_eq!(input_docs.len(), pred_docs.len());
    for (a, b) in input_docs.iter().zip(&pred_docs) {
        assert_eq!(a.sentences.len(), b.sentences.len());
        for (sa, sb) in a.sentences.iter().zip(&b.sentences) {
            assert_eq!(sa.tokens, sb.tokens);
            assert_eq!(sa.tokens.len(), sb.tags.len());
        }
    }
}

#[test]
fn document_mode_model_predicts_through_document_chains() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.conll");
    synth(&train, "longdep", 30, 14);
    let model = dir.path().join("model.seqlab");
    let out = bin()
        .args([
            "train", "--arch", "gru", "--hidden", "5", "--dim", "4", "--epochs", "2", "--lr",
            "0.2", "--seed", "2", "--seq-unit", "document",
        ])
        .arg("--train")
        .arg(&train)
        .arg("--out")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let pred = dir.path().join("pred.conll");
    let out = bin()
        .args(["predict"])
        .arg("--model")
        .arg(&model)
        .arg("--input")
        .arg(&train)
        .arg("--out")
        .arg(&pred)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    // structure preserved even though the model chains whole documents
    let a = load_conll(&train).unwrap();
    let b = load_conll(&pred).unwrap();
    assert_eq!(
        a.iter().map(|d| d.sentences.len()).collect::<Vec<_>>(),
        b.iter().map(|d| d.sentences.len()).collect::<Vec<_>>()
    );
}

#[test]
fn crf_rejects_document_unit_as_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.conll");
    synth(&train, "local", 6, 4);
    let out = bin()
        .args([
            "train", "--arch", "crf", "--epochs", "1", "--seq-unit", "document",
        ])
        .arg("--train")
        .arg(&train)
        .arg("--out")
        .arg(dir.path().join("m.seqlab"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sentence granularity"));
}

#[test]
fn seed_falls_back_to_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.conll");
    synth(&train, "local", 6, 4);
    let model = dir.path().join("m.seqlab");
    let out = bin()
        .args([
            "train", "--arch", "rnn", "--hidden", "4", "--dim", "4", "--epochs", "1", "--lr",
            "0.1",
        ])
        .arg("--train")
        .arg(&train)
        .arg("--out")
        .arg(&model)
        .env("SEQLAB_SEED", "777")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(format!("{}.run.json", model.display())).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seed"], 777);
}

#[test]
fn synth_is_deterministic_and_loads_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.conll");
    let b = dir.path().join("b.conll");
    synth(&a, "longdep", 25, 6);
    synth(&b, "longdep", 25, 6);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let docs = parse_conll(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(docs.iter().map(|d| d.sentences.len()).sum::<usize>(), 25);
}

#[test]
fn embed_train_writes_loadable_word2vec_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("text.txt");
    fs::write(&corpus, "the cat sat on the mat\nthe dog sat on the rug\n").unwrap();
    let out_path = dir.path().join("vecs.txt");
    let out = bin()
        .args([
            "embed-train", "--dim", "8", "--window", "2", "--negatives", "3", "--epochs", "2",
            "--seed", "5",
        ])
        .arg("--corpus")
        .arg(&corpus)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = seqlab::embeddings::load_word2vec_text(&out_path).unwrap();
    assert_eq!(table.dim(), 8);
    assert!(table.vector("the").is_some());
}

#[test]
fn crossval_reports_pooled_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.conll");
    synth(&data, "local", 24, 10);
    let out = bin()
        .args([
            "crossval", "--arch", "crf-nocontext", "--folds", "3", "--dim", "4", "--epochs",
            "3", "--lr", "0.2", "--seed", "3", "--json",
        ])
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["f1"].is_f64() || v["f1"].is_u64());
    assert_eq!(v["config"]["folds"], 3);
    assert_eq!(v["config"]["arch"], "crf-nocontext");
}
