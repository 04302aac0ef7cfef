use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slag")).args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "interval_c1", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    slag(&args)
}

#[test]
fn fixtures_list_names_catalog() {
    let out = slag(&["fixtures", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["interval_c1", "cylinder_translation", "two_handle"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn run_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = slag(&["run", &fixture("interval_c1"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["report.json", "checks.csv", "flux.csv", "timing.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let flux = fs::read_to_string(dir.path().join("flux.csv")).unwrap();
    assert!(flux.lines().any(|l| l.starts_with("interval_c1,straight,rf,0,-1.5")), "{flux}");
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_into(a.path(), &["--jobs", "2"]).status.success());
    assert!(run_into(b.path(), &[]).status.success());
    for f in ["report.json", "checks.csv", "flux.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_tolerance_fails_nonzero_residuals_first() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--tol-scale", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let csv = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    let mut seen_pass = false;
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    for row in rdr.records() {
        let row = row.unwrap();
        let value: f64 = row[3].parse().unwrap();
        let pass = &row[6] == "PASS";
        if &row[5] == "<=" && value > 0.0 {
            assert!(!pass, "{row:?}");
        }
        if pass {
            seen_pass = true;
        } else {
            assert!(!seen_pass, "failure after a pass: {row:?}");
        }
    }
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(fixture("interval_c1")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&src).unwrap();
    v["lagrangians"][0].as_object_mut().unwrap().remove("index");
    let p = dir.path().join("broken.json");
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let out = slag(&["run", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("index") && err.contains("line"), "{err}");
}

#[test]
fn unknown_fixture_is_a_config_error() {
    let out = slag(&["run", "no_such_fixture"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn converge_reports_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out = slag(&["converge", "interval_c1", "--levels", "1,2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("quadrature"), "{text}");
    assert!(dir.path().join("convergence.csv").exists());
}
