use std::path::Path;
use std::process::{Command, Output};

fn medens(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medens"))
        .args(args)
        .args(["--log-level", "warn"])
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = medens(dir, args);
    assert!(
        out.status.success(),
        "medens {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(medens(dir.path(), &["split", "--bogus"]).status.code(), Some(1));
    assert_eq!(medens(dir.path(), &["--help"]).status.code(), Some(0));
    let missing = medens(dir.path(), &["split", "--in", "nope.jsonl", "--out-train", "a", "--out-test", "b"]);
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["demo-corpus", "--size", "10", "--out", "h.jsonl"]);
    let first = std::fs::read(dir.path().join("h.jsonl")).unwrap();
    let again = medens(dir.path(), &["demo-corpus", "--size", "12", "--out", "h.jsonl"]);
    assert_eq!(again.status.code(), Some(1));
    assert_eq!(std::fs::read(dir.path().join("h.jsonl")).unwrap(), first);
    ok(dir.path(), &["demo-corpus", "--size", "12", "--out", "h.jsonl", "--force"]);
    assert_eq!(line_count(&dir.path().join("h.jsonl")), 12);
}

#[test]
fn split_holds_out_the_requested_test_size() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["demo-corpus", "--size", "6900", "--out", "h.jsonl"]);
    ok(dir.path(), &["split", "--in", "h.jsonl", "--out-train", "train.jsonl", "--out-test", "test.jsonl"]);
    assert_eq!(line_count(&dir.path().join("train.jsonl")), 6400);
    assert_eq!(line_count(&dir.path().join("test.jsonl")), 500);
    let m = manifest(&dir.path().join("train.manifest.json"));
    assert_eq!(m["seed"], 42);
}

#[test]
fn config_file_fills_in_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["demo-corpus", "--size", "40", "--out", "h.jsonl"]);
    std::fs::write(dir.path().join("run.conf"), "# split settings\ntest-size = 10\nseed = 7\n").unwrap();
    ok(
        dir.path(),
        &["split", "--config", "run.conf", "--in", "h.jsonl", "--out-train", "a.jsonl", "--out-test", "b.jsonl"],
    );
    assert_eq!(line_count(&dir.path().join("b.jsonl")), 10);
    assert_eq!(manifest(&dir.path().join("b.manifest.json"))["seed"], 7);

    ok(
        dir.path(),
        &[
            "split", "--config", "run.conf", "--test-size", "5", "--in", "h.jsonl", "--out-train", "c.jsonl",
            "--out-test", "d.jsonl",
        ],
    );
    assert_eq!(line_count(&dir.path().join("d.jsonl")), 5);

    std::fs::write(dir.path().join("bad.conf"), "no-such-flag = 1\n").unwrap();
    let bad = medens(
        dir.path(),
        &["split", "--config", "bad.conf", "--in", "h.jsonl", "--out-train", "e.jsonl", "--out-test", "f.jsonl"],
    );
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn generate_then_mix() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["demo-corpus", "--size", "6900", "--out", "h.jsonl"]);
    ok(dir.path(), &["split", "--in", "h.jsonl", "--out-train", "train.jsonl", "--out-test", "test.jsonl"]);
    ok(
        dir.path(),
        &["select-universe", "--in", "train.jsonl", "--out", "l210.jsonl", "--exclude", "test.jsonl"],
    );
    ok(dir.path(), &["demo-corpus", "--size", "300", "--out", "pool.jsonl", "--name", "P", "--seed", "9"]);
    ok(
        dir.path(),
        &["generate", "--snippets", "pool.jsonl", "--universe", "l210.jsonl", "--k", "10", "--n", "21", "--p", "100", "--out", "gcf.jsonl"],
    );
    assert_eq!(line_count(&dir.path().join("gcf.jsonl")), 100);
    let m = manifest(&dir.path().join("gcf.manifest.json"));
    assert_eq!(m["name"], "GCF_100^{k=10}");
    assert!(!dir.path().join("gcf.ckpt.jsonl").exists());

    // alpha * |H| synthetic examples, so 6400 human records at 0.5 need 3200.
    ok(dir.path(), &["demo-corpus", "--size", "3200", "--out", "syn.jsonl", "--name", "S", "--seed", "3"]);
    let too_few = medens(
        dir.path(),
        &["mix", "--human", "train.jsonl", "--synthetic", "gcf.jsonl", "--alpha", "0.5", "--out", "m.jsonl"],
    );
    assert_eq!(too_few.status.code(), Some(1));
    ok(
        dir.path(),
        &["mix", "--human", "train.jsonl", "--synthetic", "syn.jsonl", "--alpha", "0.5", "--out", "mixed.jsonl"],
    );
    assert_eq!(line_count(&dir.path().join("mixed.jsonl")), 9600);
}

#[test]
fn leaked_test_snippets_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["demo-corpus", "--size", "400", "--out", "h.jsonl"]);
    ok(dir.path(), &["split", "--in", "h.jsonl", "--test-size", "50", "--out-train", "train.jsonl", "--out-test", "test.jsonl"]);
    ok(dir.path(), &["select-universe", "--in", "train.jsonl", "--out", "l.jsonl", "--exclude", "test.jsonl"]);
    let leak = medens(
        dir.path(),
        &["generate", "--snippets", "test.jsonl", "--universe", "l.jsonl", "--out", "g.jsonl", "--exclude", "test.jsonl"],
    );
    assert_eq!(leak.status.code(), Some(1));
    assert!(!dir.path().join("g.jsonl").exists());
}

#[test]
fn ner_tags_negated_mentions() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("notes.txt"), "No fever. Reports headache.\n").unwrap();
    ok(dir.path(), &["ner", "--in", "notes.txt", "--out", "ner.jsonl"]);
    let rec: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(dir.path().join("ner.jsonl")).unwrap().lines().next().unwrap())
            .unwrap();
    let statuses: Vec<(String, String)> = rec["mentions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| (m["surface"].as_str().unwrap().to_lowercase(), m["status"].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(
        statuses,
        [("fever".to_string(), "negated".to_string()), ("headache".to_string(), "affirmed".to_string())]
    );
}
