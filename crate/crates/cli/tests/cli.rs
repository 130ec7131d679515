use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn autoflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autoflow"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn identity_verify_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let u = write(tmp.path(), "u.json", r#"{"kind":"uniform","params":{"a":0,"b":1}}"#);
    let out = tmp.path().join("out");
    let o = autoflow(&out, &["verify", "--source", &u, "--target", &u]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out, "report.json");
    assert_eq!(r["passed"], true);
    for key in ["w1", "julia_residual", "time_residual", "semigroup_defect", "time_one_defect"] {
        assert_eq!(r[key].as_f64(), Some(0.0), "{key}");
    }
}

#[test]
fn affine_example_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ex");
    let o = autoflow(&out, &["example", "affine", "--alpha", "3", "--beta", "-3", "--n", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(out.join("map.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["x", "T", "Tp"]);
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let t: f64 = rec[1].parse().unwrap();
        assert!((t - (3.0 * x - 3.0)).abs() < 1e-8);
        rows += 1;
    }
    assert_eq!(rows, 64);
    let mut rd = csv::Reader::from_path(out.join("field.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["x", "v"]);
    for rec in rd.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let v: f64 = rec[1].parse().unwrap();
        assert!((v - (x - 1.5) * 3f64.ln()).abs() <= 1e-8 * (1.0 + v.abs()), "{x} {v}");
    }
    let rd = csv::Reader::from_path(out.join("flow.csv")).unwrap().headers().unwrap().clone();
    assert_eq!(rd, vec!["t", "phi"]);
    assert_eq!(report(&out, "report.json")["passed"], true);
}

#[test]
fn gaussian_example_has_linear_field_and_densities() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let o = autoflow(&out, &["example", "gaussian"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(out.join("densities.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["x", "rho0", "rho1", "pushed"]);
    assert!(rd.records().count() == 4096);
    // T(x) = 2x + 1 has the fixed point -1 and v(x) = (x + 1) ln 2 after normalization.
    let mut rd = csv::Reader::from_path(out.join("field.csv")).unwrap();
    for rec in rd.records().step_by(97) {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let v: f64 = rec[1].parse().unwrap();
        if (-4.0..=6.0).contains(&x) {
            assert!((v - (x + 1.0) * 2f64.ln()).abs() < 1e-5, "{x} {v}");
        }
    }
}

#[test]
fn outputs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = autoflow(dir, &["example", "bad-fixed-point", "--n", "256", "--format", "json"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["map.json", "field.json", "densities.json", "flow.json", "report.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let u = write(tmp.path(), "u.json", r#"{"kind":"uniform","params":{"a":0,"b":1}}"#);
    let bad = write(tmp.path(), "bad.json", "{\n  \"kind\": \"uniform\",\n  \"params\": {\"a\": 0}\n}");
    let out = tmp.path().join("o");
    let o = autoflow(&out, &["verify", "--source", &u, "--target", &bad]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("missing field `b`") && msg.contains("line 3"), "{msg}");
    assert_eq!(autoflow(&out, &["map", "--source", &u, "--target", &u, "--n", "100"]).status.code(), Some(2));
    assert_eq!(autoflow(&out, &["verify", "--source", &u, "--target", &u, "--tol-julia", "-1"]).status.code(), Some(2));
    assert_eq!(autoflow(&out, &["example", "nope"]).status.code(), Some(2));
}

#[test]
fn failed_verification_exits_with_one_and_keeps_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.json", r#"{"kind":"gaussian","params":{"mean":0,"sd":1}}"#);
    let b = write(tmp.path(), "b.json", r#"{"kind":"gaussian","params":{"mean":1,"sd":2}}"#);
    let out = tmp.path().join("o");
    let o = autoflow(&out, &["verify", "--source", &a, "--target", &b, "--n", "256", "--tol-julia", "1e-300"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out, "report.json")["passed"], false);
}

#[test]
fn field_writes_table_and_descriptor() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.json", r#"{"kind":"uniform","params":{"a":0,"b":1}}"#);
    let b = write(tmp.path(), "b.json", r#"{"kind":"uniform","params":{"a":0.5,"b":1.5}}"#);
    let out = tmp.path().join("o");
    let o = autoflow(&out, &["--format", "json", "field", "--source", &a, "--target", &b, "--n", "32"]);
    assert_eq!(o.status.code(), Some(0));
    let table = report(&out, "field.json");
    assert_eq!(table.as_array().unwrap().len(), 32);
    assert!((table[0]["v"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(report(&out, "descriptor.json")["schema_version"], "1");
    let o = autoflow(&out, &["flow", "--source", &a, "--target", &b, "--x", "0.25", "--steps", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out.join("flow.csv")).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("1.0,0.75"), "{last}");
}

#[test]
fn sudakov_disks_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.json", r#"{"class":"ball","params":{"center":[0,0],"radius":1}}"#);
    let b = write(tmp.path(), "b.json", r#"{"class":"ball","params":{"center":[0,0],"radius":2}}"#);
    let out = tmp.path().join("s");
    let o = autoflow(&out, &["sudakov", "--source", &a, "--target", &b, "--samples", "4000", "--rays", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out, "report.json");
    assert_eq!(r["rng_seed"], 0x5eed);
    assert!(r["max_ray_w1"].as_f64().unwrap() < 1e-4);
    let unsupported = write(tmp.path(), "c.json", r#"{"class":"box","params":{"lo":[0,0],"hi":[1,1]}}"#);
    assert_eq!(autoflow(&out, &["sudakov", "--source", &a, "--target", &unsupported]).status.code(), Some(2));
}

#[test]
fn pathology_reports_threshold_crossing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    let o = autoflow(&out, &["pathology", "--i-max", "2000", "--threshold", "1.5", "--max-decade", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out, "pathology.json");
    assert!(r["first_above_threshold"].as_u64().is_some());
    assert_eq!(r["growth_lower_bound_holds"], true);
    let o = autoflow(&out, &["pathology", "--variant", "cubic"]);
    assert_eq!(o.status.code(), Some(2));
}
