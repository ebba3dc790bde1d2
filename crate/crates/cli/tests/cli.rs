use std::path::Path;
use std::process::{Command, Output};

fn infostat(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infostat"))
        .args(args)
        .current_dir(cwd)
        .env_remove("IS_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const TINY: &[&str] = &[
    "--profile", "custom", "--epochs", "2", "--layers", "1", "--heads", "2", "--hidden", "16", "--ff", "32", "--rounds", "200",
];

fn with_tiny<'a>(base: &[&'a str]) -> Vec<&'a str> {
    base.iter().copied().chain(TINY.iter().copied()).collect()
}

fn synthetic(dir: &Path) -> String {
    ok(&infostat(&["gen-synthetic", "--docs", "6", "--sentences", "4", "--seed", "2", "--out", "gen"], dir));
    dir.join("gen/corpus.jsonl").to_string_lossy().into_owned()
}

fn error_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    serde_json::from_str(lines[0]).expect("machine-parsable error")
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = infostat(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn data_and_config_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = infostat(&["cross-validate", "--corpus", "missing.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "io");

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"scheme_name\":\"x\",\"labels\":[\"a\"]}\n{\"doc_id\":\"d\",\"sentences\":[{\"tokens\":[\"x\"],\"mentions\":[{\"mention_id\":\"m\",\"start\":1,\"end\":0,\"label\":\"a\"}]}]}\n").unwrap();
    let out = infostat(&["cross-validate", "--corpus", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out)["message"].as_str().unwrap().contains("line 2"));

    let corpus = synthetic(dir.path());
    let out = infostat(&["cross-validate", "--corpus", &corpus, "--epochs", "4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "config");

    let out = infostat(&["cross-validate", "--corpus", &corpus, "--folds", "50"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_and_manifest_replays_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path());
    let before = std::fs::read(&corpus).unwrap();
    for out in ["a", "b"] {
        ok(&infostat(&with_tiny(&["cross-validate", "--corpus", &corpus, "--folds", "3", "--seed", "5", "--out", out]), dir.path()));
    }
    ok(&infostat(&["run", "a/manifest.toml", "--out", "c"], dir.path()));
    for file in ["report.txt", "report.json", "records.jsonl"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(file)).unwrap(), "{file}");
        assert_eq!(a, std::fs::read(dir.path().join("c").join(file)).unwrap(), "{file}");
    }
    assert_eq!(std::fs::read(&corpus).unwrap(), before, "input corpus was modified");
}

#[test]
fn seed_env_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), "seed = 3\n[synthetic]\ndocs = 2\nsentences_per_doc = 2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_infostat"))
        .args(["gen-synthetic", "--config", "exp.toml", "--out", "g"])
        .current_dir(dir.path())
        .env("IS_SEED", "41")
        .output()
        .unwrap();
    ok(&out);
    let manifest = std::fs::read_to_string(dir.path().join("g/manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 41"), "{manifest}");
    assert!(manifest.contains("docs = 2"));
}

#[test]
fn ablate_writes_the_four_variants() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path());
    let out = infostat(&with_tiny(&["ablate", "--corpus", &corpus, "--folds", "2", "--out", "abl", "--jobs", "1"]), dir.path());
    ok(&out);
    for variant in ["full", "wo-mention", "wo-local", "wo-overlap", "wo-context"] {
        for file in ["report.txt", "report.json", "records.jsonl"] {
            assert!(dir.path().join("abl").join(variant).join(file).exists(), "{variant}/{file}");
        }
    }
    let table = std::fs::read_to_string(dir.path().join("abl/ablation.txt")).unwrap();
    assert!(table.contains("wo-overlap") && table.contains("p vs full"));
}

#[test]
fn train_then_probe_and_build_vocab() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path());
    ok(&infostat(&with_tiny(&["train", "--corpus", &corpus, "--folds", "3", "--fold", "1", "--out", "t"]), dir.path()));
    assert!(dir.path().join("t/model.ckpt").exists());
    assert!(dir.path().join("t/train_log.json").exists());
    let out = infostat(&["probe", "--checkpoint", "t/model.ckpt", "--corpus", &corpus, "--top-k", "5", "--out", "p"], dir.path());
    ok(&out);
    let table = std::fs::read_to_string(dir.path().join("p/probe.txt")).unwrap();
    assert!(table.starts_with("IS class"));
    for excluded in ["[CLS]", "[SEP]", " ., ", ", ,"] {
        assert!(!table.contains(excluded), "{excluded} in {table}");
    }
    let manifest = std::fs::read_to_string(dir.path().join("p/manifest.toml")).unwrap();
    assert!(manifest.contains("fold = 1"));

    ok(&infostat(&["build-vocab", "--corpus", &corpus, "--vocab-size", "300", "--out", "v"], dir.path()));
    let vocab = std::fs::read_to_string(dir.path().join("v/vocab.txt")).unwrap();
    assert!(vocab.lines().count() <= 300);
    assert!(vocab.starts_with("[PAD]\n[UNK]\n[CLS]\n[SEP]\n"));
}
