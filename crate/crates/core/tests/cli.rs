mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::corpus_path;
use serde_json::Value;

fn fz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fz")).args(args).env_remove("FZ_CORPUS").output().unwrap()
}

fn fz_json(args: &[&str]) -> (i32, Value) {
    let out = fz(args);
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), v)
}

fn p(name: &str) -> String {
    corpus_path(name).to_str().unwrap().to_string()
}

#[test]
fn validate_exit_codes() {
    let (code, v) = fz_json(&["validate", &p("cycle4.system.json")]);
    assert_eq!(code, 0);
    assert_eq!(v["system"]["group_order"], 4);
    let (code, v) = fz_json(&["validate", &p("cycle4.system.json"), "--factor", &p("cycle4_over_cycle2.factor.json")]);
    assert_eq!(code, 0);
    assert_eq!(v["factor"]["passed"], true);

    assert_eq!(fz(&["validate", "/definitely/missing.json"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(corpus_path("cycle4.system.json")).unwrap().replacen("\"1/4\"", "\"24/100\"", 1);
    std::fs::write(&bad, text).unwrap();
    let out = fz(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("99/100"));

    std::fs::write(&bad, "{\"atoms\": 3}").unwrap();
    assert_eq!(fz(&["validate", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn classify_reports_and_fault_path() {
    let (code, v) = fz_json(&["classify", &p("cycle4_over_cycle2.factor.json")]);
    assert_eq!(code, 0);
    assert_eq!(v["relatively_compact"], true);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 6);
    assert!(v["criteria"].as_array().unwrap().iter().all(|c| c["holds"] == true));

    let (code, v) = fz_json(&["classify", &p("q8.system.json"), "--over", "self"]);
    assert_eq!(code, 0);
    assert_eq!(v["relatively_compact"], true);

    let (code, v) = fz_json(&["classify", &p("cycle4_over_cycle2.factor.json"), "--inject-fault", "iii"]);
    assert_eq!(code, 3);
    assert_eq!(v["agreement"], false);
}

#[test]
fn tower_command() {
    let (code, v) = fz_json(&["tower", &p("cycle4.system.json")]);
    assert_eq!(code, 0);
    assert_eq!(v["length"], 1);
    let (_, v) = fz_json(&["tower", &p("q8.system.json"), "--max-rank", "1"]);
    assert_eq!(v["length"], 2);
    assert_eq!(v["levels"][1]["atoms"], 4);
    let (_, v) = fz_json(&["tower", &p("trivial.system.json")]);
    assert_eq!(v["length"], 0);
    assert_eq!(fz(&["tower", &p("q8.system.json"), "--max-rank", "0"]).status.code(), Some(2));
}

#[test]
fn skew_mackey_extract_commands() {
    let (code, v) = fz_json(&["mackey", &p("z2_ergodic.cocycle.json")]);
    assert_eq!(code, 0);
    assert_eq!(v["subgroup"], serde_json::json!(["0", "1"]));
    let (_, v) = fz_json(&["mackey", &p("z2_trivial.cocycle.json")]);
    assert_eq!(v["subgroup"], serde_json::json!(["0"]));
    assert_eq!(fz(&["mackey", &p("z2_ergodic.cocycle.json"), "--mackey-budget", "2"]).status.code(), Some(2));

    let (code, v) = fz_json(&["skew", &p("z2_ergodic.cocycle.json")]);
    assert_eq!(code, 0);
    assert_eq!(v["atoms"], 4);
    assert_eq!(v["ergodic"], true);

    let (code, v) = fz_json(&["extract", &p("cycle4_over_cycle2.factor.json")]);
    assert_eq!(code, 0);
    let t = &v["modules"][0]["lambdas"]["T"];
    assert_eq!((t["y1"][0][0][0].as_f64(), t["y2"][0][0][0].as_f64()), (Some(1.0), Some(-1.0)));
}

#[test]
fn text_format_and_out_file() {
    let out = fz(&["classify", &p("cycle4_over_cycle2.factor.json"), "--format", "text"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("relatively compact: true"));
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("r.json");
    let out = fz(&["wm", &p("cycle4_over_cycle2.factor.json"), "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(v["inv_relprod_dim"], 2);
}

#[test]
fn outputs_are_deterministic_and_round_trip() {
    for args in [
        vec!["classify".to_string(), p("weighted_over_cycle2.factor.json")],
        vec!["dichotomy".to_string(), p("q8.system.json"), "--over".into(), "trivial".into()],
        vec!["extract".to_string(), p("q8.system.json"), "--over".into(), "trivial".into()],
        vec!["tower".to_string(), p("q8.system.json"), "--max-rank".into(), "1".into()],
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = fz(&args).stdout;
        let b = fz(&args).stdout;
        assert_eq!(a, b);
        let v: Value = serde_json::from_slice(&a).unwrap();
        assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", String::from_utf8(a).unwrap());
    }
}

#[test]
fn selftest_passes_and_fails_deterministically() {
    let (code, v) = fz_json(&["selftest"]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["failed"], 0);

    let (code, a) = fz_json(&["selftest", "--tol", "1e-30"]);
    let (_, b) = fz_json(&["selftest", "--tol", "1e-30"]);
    assert_ne!(code, 0);
    assert_eq!(a, b);
    assert!(a["failed"].as_u64().unwrap() > 0);
}

fn copy_corpus(to: &Path) {
    for entry in std::fs::read_dir(corpus_path("")).unwrap() {
        let path = entry.unwrap().path();
        std::fs::copy(&path, to.join(path.file_name().unwrap())).unwrap();
    }
}

#[test]
fn corrupted_corpus_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    copy_corpus(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_fz")).args(["selftest"]).env("FZ_CORPUS", dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    std::fs::write(dir.path().join("cycle2.system.json"), "{ not json").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fz")).args(["selftest"]).env("FZ_CORPUS", dir.path()).output().unwrap();
    assert_ne!(out.status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    copy_corpus(dir.path());
    let f = dir.path().join("cycle4_over_cycle2.factor.json");
    let text = std::fs::read_to_string(&f).unwrap().replace("\"x2\": \"y2\"", "\"x2\": \"y1\"");
    std::fs::write(&f, text).unwrap();
    let out = fz(&["selftest", "--corpus", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flags_are_input_errors() {
    assert_eq!(fz(&["selftest", "--tol", "0"]).status.code(), Some(1));
    assert_eq!(fz(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fz(&["--help"]).status.code(), Some(0));
}
