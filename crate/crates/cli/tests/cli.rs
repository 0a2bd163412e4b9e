use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn horizon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horizon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "data", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_misner_file() {
    let out = horizon(&["validate", "--input", &data("misner.json")]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["kappa"], 1.0);
    assert_eq!(v["passed"], true);
}

#[test]
fn validate_reports_non_constant_length() {
    let out = horizon(&[
        "validate",
        "--input",
        &data("round_sphere.json"),
        "--grid",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["passed"], false);
    assert!(v["length_residual"].as_f64().unwrap() > 0.1);
    assert!(v["max_killing_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn validate_malformed_expression() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(data("misner.json"))
        .unwrap()
        .replace("alpha^2/4", "alpha^2/*4");
    std::fs::write(&path, text).unwrap();
    let out = horizon(&["validate", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.contains("sigma[0][0]") && err.contains("offset 8"),
        "{err}"
    );
}

#[test]
fn validate_missing_file() {
    let out = horizon(&["validate", "--input", "/nonexistent/data.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn induce_kerr_outer() {
    let out = horizon(&[
        "induce",
        "--spacetime",
        "kerr",
        "--m",
        "1",
        "--a",
        "0.5",
        "--branch",
        "outer",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let row = &json(&out)["rows"][0];
    assert!(row["deviation"]["sigma"].as_f64().unwrap() < 1e-7);
    assert!(row["kappa_deviation"].as_f64().unwrap() < 1e-9);
}

#[test]
fn induce_schwarzschild_kappa() {
    let out = horizon(&["induce", "--spacetime", "schwarzschild", "--m", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let k = json(&out)["rows"][0]["kappa_numeric"].as_f64().unwrap();
    assert!((k - 0.125).abs() < 1e-12);
}

#[test]
fn induce_rejects_overspinning_kerr() {
    let out = horizon(&["induce", "--spacetime", "kerr", "--m", "1", "--a", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("parameter"));
}

#[test]
fn induce_rejects_wrong_branch() {
    let out = horizon(&[
        "induce",
        "--spacetime",
        "schwarzschild",
        "--branch",
        "inner",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn expand_schwarzschild_row() {
    let out = horizon(&[
        "expand",
        "--spacetime",
        "schwarzschild",
        "--m",
        "1",
        "--grid",
        "3",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let mut count = 0;
    for line in lines {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(line.as_bytes());
        let rec = rdr.records().next().unwrap().unwrap();
        let get = |name: &str| rec[col(name)].parse::<f64>().unwrap();
        assert_eq!(get("q_V_V"), -0.5);
        assert_eq!(get("q_V_e2"), 0.0);
        assert!((get("q_e2_e2") - 1.0).abs() < 1e-12);
        assert!((get("q_e3_e3") - 1.0).abs() < 1e-12);
        count += 1;
    }
    assert_eq!(count, 3);
}

#[test]
fn expand_misner_and_taub_nut() {
    let out = horizon(&["expand", "--spacetime", "misner"]);
    assert_eq!(out.status.code(), Some(0));
    for row in json(&out)["rows"].as_array().unwrap() {
        let q = &row["q1"];
        assert_eq!(q[0][0], -2.0);
        for i in 1..3 {
            for j in 1..3 {
                assert_eq!(q[i][j], 0.0);
            }
        }
    }
    let out = horizon(&[
        "expand",
        "--spacetime",
        "taub_nut",
        "--m",
        "0",
        "--l",
        "0.7071067811865476",
    ]);
    assert_eq!(out.status.code(), Some(0));
    for row in json(&out)["rows"].as_array().unwrap() {
        let q = row["q1"].as_array().unwrap();
        let v_row: Vec<f64> = q[0]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(v_row, vec![-2.0, 0.0, 0.0]);
        assert!(q
            .iter()
            .flat_map(|r| r.as_array().unwrap())
            .all(|x| x.as_f64().unwrap().is_finite()));
    }
}

#[test]
fn expand_input_file_writes_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q1.csv");
    let out = horizon(&[
        "expand",
        "--input",
        &data("misner.json"),
        "--grid",
        "2",
        "--format",
        "csv",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 1 + 8);
}

#[test]
fn verify_misner_identities() {
    let out = horizon(&["verify", "--spacetime", "misner"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    for c in v["checks"].as_array().unwrap() {
        let name = c["check"].as_str().unwrap();
        if name == "remainder_slope" {
            continue;
        }
        assert!(c["residual"].as_f64().unwrap() < 1e-10, "{c}");
    }
}

#[test]
fn verify_coarse_kerr() {
    let out = horizon(&[
        "verify",
        "--spacetime",
        "kerr",
        "--theta-grid",
        "3",
        "--grid",
        "3",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("criterion,check,spacetime,residual,threshold,passed,detail"));
}

#[test]
fn verify_tightened_tolerance_fails() {
    let out = horizon(&[
        "verify",
        "--spacetime",
        "schwarzschild",
        "--theta-grid",
        "2",
        "--tol-slope",
        "1e-9",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["passed"], false);
}

#[test]
fn verify_all_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = horizon(&["verify", "--all", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let criteria: Vec<u64> = v["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["criterion"].as_u64().unwrap())
        .collect();
    assert_eq!(criteria, (1..=9).collect::<Vec<_>>());
    assert!(v["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["verify"],
        vec!["frobnicate"],
        vec!["verify", "--all", "--tol-kappa", "0"],
        vec!["verify", "--all", "--spacetime", "kerr"],
        vec!["verify", "--spacetime", "minkowski"],
        vec!["expand", "--spacetime", "kerr", "--grid", "0"],
        vec![
            "verify",
            "--spacetime",
            "kerr",
            "--h",
            "1e-3",
            "--t-max",
            "3e-3",
        ],
    ] {
        let out = horizon(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn help_exits_0() {
    assert_eq!(horizon(&["--help"]).status.code(), Some(0));
}
