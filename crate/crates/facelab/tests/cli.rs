use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn facelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facelab")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = facelab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn banded(dir: &TempDir) -> std::path::PathBuf {
    let data = dir.path().join("data");
    ok(&["generate", "--kind", "banded", "--out", p(&data), "--seed", "2"]);
    data
}

#[test]
fn help_and_usage_errors() {
    let help = facelab(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("train"));
    assert_eq!(facelab(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(facelab(&["train", "--method", "eigen"]).status.code(), Some(1));
    assert_eq!(facelab(&[]).status.code(), Some(1));
}

#[test]
fn bad_split_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = banded(&dir);
    let out = dir.path().join("e.ffm");
    let r = facelab(&["train", "--method", "eigen", "--dataset", p(&data), "--out", p(&out), "--split", "k:zero"]);
    assert_eq!(r.status.code(), Some(1));
    let r = facelab(&["train", "--method", "eigen", "--dataset", p(&data), "--out", p(&out), "--partition", "test"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn train_recognize_inspect() {
    let dir = TempDir::new().unwrap();
    let data = banded(&dir);
    let model = dir.path().join("e.ffm");
    ok(&["train", "--method", "eigen", "--dataset", p(&data), "--out", p(&model)]);
    let rec = ok(&["recognize", "--model", p(&model), "--image", p(&data.join("s03/004.pgm"))]);
    let mut lines = rec.lines();
    assert_eq!(lines.next(), Some("image,method,prediction,score"));
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&fields[1..3], ["eigen", "s03"]);

    let info = ok(&["inspect", "--model", p(&model)]);
    assert!(info.contains("method eigen"));
    assert!(info.contains("components 10"));
}

#[test]
fn every_single_method_trains_and_evaluates() {
    let dir = TempDir::new().unwrap();
    let data = banded(&dir);
    for method in ["eigen", "fisher", "hmm"] {
        let model = dir.path().join(format!("{method}.ffm"));
        ok(&["train", "--method", method, "--dataset", p(&data), "--out", p(&model), "--split", "k:5,seed:1"]);
        let csv = ok(&["evaluate", "--model", p(&model), "--dataset", p(&data), "--split", "k:5,seed:1"]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("path,truth,prediction,score,correct"));
        assert_eq!(lines.count(), 20, "{method}");
    }
}

#[test]
fn multi_model_directory() {
    let dir = TempDir::new().unwrap();
    let data = banded(&dir);
    let models = dir.path().join("models");
    ok(&["train", "--method", "all", "--dataset", p(&data), "--out", p(&models), "--split", "k:5,seed:1"]);
    for f in ["eigen.ffm", "fisher.ffm", "hmm.ffm", "profile.ffm", "policy.txt"] {
        assert!(models.join(f).is_file(), "{f}");
    }
    let probe = data.join("s02/003.pgm");
    let rec = ok(&["recognize", "--model", p(&models), "--multi", "--image", p(&probe)]);
    assert!(rec.lines().nth(1).unwrap().contains(",s02,"), "{rec}");

    let assessed = ok(&["assess", "--models", p(&models), "--image", p(&probe)]);
    for key in ["pose_deviation=", "illumination_deviation=", "occlusion_degree=", "method="] {
        assert!(assessed.contains(key), "{assessed}");
    }

    let report = dir.path().join("r.csv");
    let summary = ok(&["evaluate", "--model", p(&models), "--dataset", p(&data), "--split", "k:5,seed:1", "--report", p(&report)]);
    assert!(!summary.is_empty());
    assert!(std::fs::read_to_string(&report).unwrap().starts_with("path,truth,prediction,score,correct\n"));
}

#[test]
fn sweep_writes_one_row_per_step() {
    let dir = TempDir::new().unwrap();
    let data = banded(&dir);
    let impostors = dir.path().join("imp");
    ok(&["generate", "--kind", "illumination", "--out", p(&impostors), "--height", "32", "--width", "24", "--subjects", "2", "--per-subject", "3"]);
    let model = dir.path().join("e.ffm");
    ok(&["train", "--method", "eigen", "--dataset", p(&data), "--out", p(&model)]);
    let csv = ok(&["sweep", "--model", p(&model), "--known", p(&data), "--impostors", p(&impostors), "--steps", "5"]);
    assert_eq!(csv.lines().count(), 6, "{csv}");
}

#[test]
fn data_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let data = banded(&dir);
    let model = dir.path().join("e.ffm");
    ok(&["train", "--method", "eigen", "--dataset", p(&data), "--out", p(&model)]);

    let small = dir.path().join("small");
    ok(&["generate", "--kind", "illumination", "--out", p(&small), "--subjects", "2", "--per-subject", "2"]);
    let r = facelab(&["recognize", "--model", p(&model), "--image", p(&small.join("s01/000.pgm"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("dimension mismatch"));

    let bad = dir.path().join("bad.ffm");
    std::fs::write(&bad, "garbage\n").unwrap();
    assert_eq!(facelab(&["inspect", "--model", p(&bad)]).status.code(), Some(2));
    let missing = dir.path().join("nope.ffm");
    assert_eq!(facelab(&["inspect", "--model", p(&missing)]).status.code(), Some(2));
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = banded(&dir);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["train", "--method", "all", "--dataset", p(&data), "--out", p(out), "--split", "k:4,seed:7"]);
    }
    for f in ["eigen.ffm", "fisher.ffm", "hmm.ffm", "profile.ffm", "policy.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
