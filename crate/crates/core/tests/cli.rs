use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ogeec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ogeec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = ogeec(args, dir);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture() -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(
        &[
            "gen", "--n", "300", "--d", "2000", "--labels", "30", "--clusters", "8", "--seed", "5",
            "--out", "tr.txt", "--test-n", "80", "--test-out", "te.txt",
        ],
        dir.path(),
    );
    dir
}

fn file(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn eval_matches_golden_report() {
    let dir = fixture();
    ok(
        &["eval", "--train", "tr.txt", "--test", "te.txt", "--r", "32", "-e", "3", "--seed", "7", "--tsv", "rep.tsv"],
        dir.path(),
    );
    let golden = include_str!("golden/eval_small.tsv");
    let expected: String = golden.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    assert_eq!(fs::read_to_string(file(&dir, "rep.tsv")).unwrap(), expected);
}

#[test]
fn train_is_reproducible() {
    let dir = fixture();
    ok(&["train", "--train", "tr.txt", "--model", "a.toml", "--r", "16", "--seed", "3"], dir.path());
    ok(&["train", "--train", "tr.txt", "--model", "b.toml", "--r", "16", "--seed", "3"], dir.path());
    let a = fs::read_to_string(file(&dir, "a.toml")).unwrap();
    assert_eq!(a, fs::read_to_string(file(&dir, "b.toml")).unwrap());
    assert!(a.contains("seeds = [3, 4, 5, 6, 7]"), "{a}");
}

#[test]
fn missing_input_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    let out = ogeec(&["eval", "--train", "nope.txt", "--test", "nope.txt"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
    let out = ogeec(&["train", "--train", "nope.txt", "--model", "m.toml", "--r", "0"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn single_learner_ensemble_path_equals_plain_predict() {
    let dir = fixture();
    let single = ok(&["predict", "--train", "tr.txt", "--test", "te.txt", "--r", "24", "-e", "1", "--seed", "11"], dir.path());
    ok(&["train", "--train", "tr.txt", "--model", "m.toml", "--r", "24", "-e", "1", "--seed", "11"], dir.path());
    let via_model = ok(&["predict", "--train", "tr.txt", "--test", "te.txt", "--model", "m.toml"], dir.path());
    assert_eq!(single, via_model);
    assert_eq!(single.lines().count(), 80);
}

#[test]
fn predictions_are_byte_identical_across_runs_and_workers() {
    let dir = fixture();
    let base = ["predict", "--train", "tr.txt", "--test", "te.txt", "--r", "24", "-e", "3"];
    let a = ok(&base, dir.path());
    let b = ok(&base, dir.path());
    let w1 = ok(&[&["--workers", "1"], &base[..]].concat(), dir.path());
    let w4 = ok(&[&["--workers", "4"], &base[..]].concat(), dir.path());
    assert_eq!(a, b);
    assert_eq!(w1, w4);
    assert_eq!(a, w1);
}

#[test]
fn cached_embeddings_give_same_predictions() {
    let dir = fixture();
    let args = ["--r", "24", "-e", "2", "--seed", "9"];
    ok(&[&["train", "--train", "tr.txt", "--model", "m.toml", "--cache-dir", "cache"], &args[..]].concat(), dir.path());
    assert_eq!(fs::read_dir(file(&dir, "cache")).unwrap().count(), 4);
    let cached = ok(&["predict", "--train", "tr.txt", "--test", "te.txt", "--model", "m.toml", "--cache-dir", "cache"], dir.path());
    let fresh = ok(&[&["predict", "--train", "tr.txt", "--test", "te.txt"], &args[..]].concat(), dir.path());
    assert_eq!(cached, fresh);
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = fixture();
    fs::write(file(&dir, "run.toml"), "r = 24\nensemble_size = 1\nseed = 11\ntop = 2\n").unwrap();
    let from_file = ok(&["--config", "run.toml", "predict", "--train", "tr.txt", "--test", "te.txt"], dir.path());
    let explicit = ok(&["predict", "--train", "tr.txt", "--test", "te.txt", "--r", "24", "-e", "1", "--seed", "11", "--top", "2"], dir.path());
    assert_eq!(from_file, explicit);
    assert!(from_file.lines().all(|l| l.split('\t').count() <= 2));
    let overridden = ok(&["--config", "run.toml", "predict", "--train", "tr.txt", "--test", "te.txt", "--top", "1"], dir.path());
    assert!(overridden.lines().all(|l| l.split('\t').count() <= 1));
    fs::write(file(&dir, "bad.toml"), "radius = 3\n").unwrap();
    let out = ogeec(&["--config", "bad.toml", "predict", "--train", "tr.txt", "--test", "te.txt"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn bounds_table_values() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["analyze", "bounds"], dir.path());
    for row in [
        "Delicious-200K\t196606\t0.1627\t0.8373\t1.1627",
        "Amazon-670K\t490449\t0.1687\t0.8313\t1.1687",
        "Amazon-3M\t1717899\t0.1766\t0.8234\t1.1766",
        "50\t0.3254\t0.6746\t1.3254",
        "400\t0.1150\t0.8850\t1.1150",
    ] {
        assert!(out.contains(row), "missing {row:?}");
    }
}

#[test]
fn analysis_subcommands_run() {
    let dir = fixture();
    let hist = ok(&["analyze", "distortion", "--data", "tr.txt", "--pairs", "500", "--r", "32"], dir.path());
    assert!(hist.lines().count() > 10);
    let sweep = ok(&["analyze", "sweep-ensemble", "--train", "tr.txt", "--test", "te.txt", "--r", "16", "-e", "2"], dir.path());
    assert!(sweep.lines().count() >= 3);
    let cmp = ok(&["analyze", "lsh-compare", "--train", "tr.txt", "--test", "te.txt", "--r", "16", "-e", "1", "--tables", "2", "--bits", "4"], dir.path());
    assert!(!cmp.is_empty());
}
