use std::path::PathBuf;
use std::process::{Command, Output};

use mestcert::cli::{execute, RunConfig};
use mestcert::glm::{self, Dataset};
use mestcert::losses::{make_family, FamilySpec};
use mestcert::Vector;
use clap::Parser;
use serde_json::Value;

fn data(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("tests/data");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mestcert")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn loo_matches_golden_file() {
    let out = run(&["loo", &data("logistic_sample.csv"), "--family", "logistic", "--exact"]);
    assert_eq!(out.status.code(), Some(0));
    let golden = std::fs::read(data("loo_logistic_exact.json")).unwrap();
    assert!(out.stdout == golden, "output drifted from the golden file");
}

#[test]
fn loo_bounds_cover_the_refits() {
    let v = json(&run(&["loo", &data("logistic_sample.csv"), "--family", "logistic", "--exact"]));
    let folds = v["per_fold"].as_array().unwrap();
    assert_eq!(folds.len(), 200);
    let mut certified = 0;
    for f in folds {
        if f["certified"].as_bool().unwrap() {
            certified += 1;
            let bound = f["deviation_bound"].as_f64().unwrap();
            let seen = f["observed_deviation"].as_f64().unwrap();
            assert!(seen <= bound, "fold {}: {seen} > {bound}", f["index_set"]);
        }
    }
    assert_eq!(v["certified_folds"].as_u64().unwrap(), certified);
}

#[test]
fn ols_certificate_is_exact() {
    let v = json(&run(&["certify", &data("ols_toy.csv"), "--exact"]));
    assert_eq!(v["condition_ok"], Value::Bool(true));
    assert_eq!(v["expansion_bound"].as_f64(), Some(0.0));
    assert!(v["exact_remainder"].as_f64().unwrap() < 1e-12);
    let d = v["delta"].as_f64().unwrap();
    let e = v["exact_error"].as_f64().unwrap();
    assert!((e - 2.0 * d / 3.0).abs() < 1e-12 * d);
}

#[test]
fn floats_round_trip_bitwise() {
    let cfg = RunConfig::parse_from(["mestcert", "certify", &data("poisson_sample.csv"), "--family", "poisson"]);
    let v = execute(&cfg).unwrap();
    let text = mestcert::cli::render(&v);
    let back: Value = serde_json::from_str(&text).unwrap();

    // Recompute directly through the library and compare the parsed text bit for bit.
    let rows: Vec<Vec<f64>> = csv::Reader::from_path(data("poisson_sample.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r[..3].to_vec()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let d = Dataset::from_rows(&x, y).unwrap();
    let c = glm::certify(&d, &make_family(FamilySpec::Poisson).unwrap(), &Vector::zeros(3), None).unwrap();
    assert_eq!(back["delta"].as_f64().unwrap().to_bits(), c.delta.to_bits());
    assert_eq!(back["condition_max_c"].as_f64().unwrap().to_bits(), c.condition_max_c.to_bits());
    for (j, s) in back["newton_step"].as_array().unwrap().iter().enumerate() {
        assert_eq!(s.as_f64().unwrap().to_bits(), c.newton_step[j].to_bits());
    }
}

#[test]
fn every_command_is_deterministic() {
    let logistic = data("logistic_sample.csv");
    let survival = data("survival_sample.csv");
    let models = data("models.txt");
    let folds = data("folds.txt");
    let constraint = data("sum_to_zero.txt");
    let poisson = data("poisson_sample.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["fit", &logistic, "--family", "logistic"],
        vec!["certify", &logistic, "--family", "logistic", "--exact"],
        vec!["loo", &logistic, "--family", "logistic", "--fold-file", &folds, "--exact"],
        vec!["screen", &logistic, "--family", "logistic"],
        vec!["posi", &logistic, "--family", "logistic", "--models", &models],
        vec!["cox-certify", &survival, "--exact"],
        vec!["nls-certify", &logistic, "--exact"],
        vec!["kkt", &poisson, "--family", "poisson", "--constraint", &constraint, "--exact"],
    ];
    for args in cases {
        let a = run(&args);
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&a.stdout));
        let b = run(&args);
        let mut threaded = args.clone();
        threaded.extend(["--threads", "3"]);
        let c = run(&threaded);
        assert_eq!(a.stdout, b.stdout, "{args:?} differs between runs");
        assert_eq!(a.stdout, c.stdout, "{args:?} depends on the thread count");
    }
}

#[test]
fn out_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    let p = path.to_string_lossy().into_owned();
    let out = run(&["fit", &data("ols_toy.csv"), "--out", &p]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["command"], "fit");
    assert!(v["score_norm"].as_f64().unwrap() < 1e-8);
}

#[test]
fn hard_errors_exit_two() {
    let unknown = run(&["certify", &data("ols_toy.csv"), "--family", "gamma"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(json(&unknown)["error"].as_str().unwrap().contains("gamma"));

    let missing = run(&["fit", "/nonexistent/file.csv"]);
    assert_eq!(missing.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,y\n1,2\nNA,3\n").unwrap();
    let out = run(&["fit", &bad.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = json(&out)["error"].as_str().unwrap().to_string();
    assert!(msg.contains("NA") && msg.contains('a'), "{msg}");

    let posi = run(&["posi", &data("logistic_sample.csv")]);
    assert_eq!(posi.status.code(), Some(2));
}

#[test]
fn invalid_certificate_is_not_an_error() {
    // A far-off target fails the condition but still produces a report.
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("target.txt");
    std::fs::write(&t, "8,-8,8\n").unwrap();
    let out = run(&["certify", &data("logistic_sample.csv"), "--family", "logistic", "--target", &t.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["condition_ok"], Value::Bool(false));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("cox-certify"));
}
