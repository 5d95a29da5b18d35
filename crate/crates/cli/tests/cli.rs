use std::process::{Command, Output};

use serde_json::Value;

fn cvssa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvssa")).args(args).env_remove("CV_SSA_WORKERS").output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

const ESTIMATE: &[&str] =
    &["estimate", "--builtin", "dimerization", "--mean", "M", "--horizon", "2", "--n", "2000", "--seed", "3"];

#[test]
fn estimate_prints_a_record() {
    let v = json(&cvssa(ESTIMATE));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["query"]["kind"], "mean");
    assert_eq!(v["query"]["species_name"], "M");
    assert!(v["lcv"]["estimate"].as_f64().unwrap().is_finite());
    assert!(v["crude"]["std_error"].as_f64().unwrap() > 0.0);
    let n_cvs = v["lcv"]["n_cvs"].as_u64().unwrap();
    assert!(n_cvs <= 10);
    assert_eq!(v["lcv"]["beta"].as_array().unwrap().len(), v["selected"].as_array().unwrap().len());
    assert!(v["efficiency"].as_f64().is_some());
    assert!(v.get("selection").is_none());
}

#[test]
fn estimate_is_independent_of_worker_count() {
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timings");
        for k in ["slowdown", "efficiency", "config"] {
            v.as_object_mut().unwrap().remove(k);
        }
        v
    };
    let mut one = ESTIMATE.to_vec();
    one.extend(["--workers", "1"]);
    let mut three = ESTIMATE.to_vec();
    three.extend(["--workers", "3"]);
    assert_eq!(strip(json(&cvssa(&one))), strip(json(&cvssa(&three))));
}

#[test]
fn threshold_query_with_audit() {
    let v = json(&cvssa(&[
        "estimate",
        "--builtin",
        "birth_death",
        "--prob-le",
        "X",
        "8",
        "--horizon",
        "2",
        "--n",
        "1000",
        "--audit",
        "--no-baseline",
    ]));
    assert_eq!(v["query"]["kind"], "threshold_probability");
    assert_eq!(v["query"]["level"], 8);
    assert!(v["selection"]["rounds"].as_array().is_some());
    assert!(v["efficiency"].is_null());
}

#[test]
fn missing_model_file_is_an_input_error() {
    let out = cvssa(&["estimate", "--model", "/nonexistent/model.srn", "--mean", "X", "--horizon", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(cvssa(&["estimate", "--builtin", "birth_death"]).status.code(), Some(1));
    assert_eq!(cvssa(&["estimate", "--builtin", "nope", "--mean", "X", "--horizon", "1"]).status.code(), Some(1));
    assert_eq!(
        cvssa(&["estimate", "--builtin", "birth_death", "--mean", "Q", "--horizon", "1"]).status.code(),
        Some(1)
    );
}

#[test]
fn model_file_round_trips_through_show() {
    let shown = cvssa(&["show", "birth_death"]);
    assert!(shown.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bd.srn");
    std::fs::write(&path, &shown.stdout).unwrap();
    let v = json(&cvssa(&[
        "estimate",
        "--model",
        path.to_str().unwrap(),
        "--mean",
        "X",
        "--horizon",
        "2",
        "--n",
        "1000",
        "--no-baseline",
    ]));
    assert!((v["lcv"]["estimate"].as_f64().unwrap() - 8.6466).abs() < 0.5);
}

#[test]
fn validate_birth_death() {
    let v = json(&cvssa(&["validate", "--builtin", "birth_death", "--mean", "X", "--horizon", "2", "--n", "2000"]));
    let oracle = v["oracle_value"].as_f64().unwrap();
    assert!((oracle - v["closed_form"].as_f64().unwrap()).abs() < 1e-6);
    assert!(v["lost_mass"].as_f64().unwrap() < 1e-9);
    assert!(v["gap_in_std_errors"].as_f64().unwrap().abs() < 5.0);
}

#[test]
fn validate_refuses_large_models() {
    let out = cvssa(&["validate", "--builtin", "lacoperon", "--mean", "Y", "--horizon", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("species"));
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    let out = cvssa(&[
        "simulate",
        "--builtin",
        "dimerization",
        "--horizon",
        "1",
        "--seed",
        "4",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,M,D"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert!(rows.len() >= 2);
    assert_eq!(rows[0], vec![0.0, 0.0, 0.0]);
    assert_eq!(rows.last().unwrap()[0], 1.0);
    assert!(rows.windows(2).all(|w| w[0][0] <= w[1][0]));
}

#[test]
fn models_and_constraint_listing() {
    let out = cvssa(&["models"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["birth_death", "dimerization", "distmod", "lacoperon"] {
        assert!(text.contains(name), "{text}");
    }
    let c = cvssa(&["constraint", "--builtin", "birth_death", "--moment", "1", "--lambda", "-1", "--horizon", "2"]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    assert!(String::from_utf8_lossy(&c.stdout).contains("lambda=-1"));
}
