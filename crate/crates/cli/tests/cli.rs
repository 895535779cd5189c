use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sopslab_core::feedback::tanh_feedback;
use sopslab_core::sops::import_sops;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sops-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn exit_code(args: &[&str]) -> (i32, String) {
    let out = run(args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn profile_reports_limiting_period() {
    let v = ok_json(&["profile", "--alpha", "0", "--a", "2", "--b", "1"]);
    assert_eq!(v["omega_star"].as_f64().unwrap(), 4.5);
    assert!((v["hopf_beta"].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
}

#[test]
fn profile_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let v = ok_json(&[
        "profile",
        "--alpha",
        "0.125",
        "--a",
        "24",
        "--b",
        "1",
        "--samples",
        "21",
        "--out",
        out,
    ]);
    let file: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("profile.json")).unwrap())
            .unwrap();
    assert_eq!(file, v);
    let (header, rows) = read_csv(&dir.path().join("nu_star.csv"));
    assert_eq!(header, ["lambda", "nu_re", "nu_im", "nu_abs"]);
    assert_eq!(rows.len(), 21);
    // nu*(1) = 1 on the grid point lambda = 1.
    let at_one = rows.iter().find(|r| (r[0] - 1.0).abs() < 1e-12).unwrap();
    assert!((at_one[1] - 1.0).abs() < 1e-12);
}

#[test]
fn mean_field_rule_is_stable_when_discriminant_negative() {
    let v = ok_json(&[
        "classify",
        "--rule",
        "mean-field",
        "--alpha",
        "0.5",
        "--a",
        "2",
        "--b",
        "1",
        "--kappa",
        "0.5",
    ]);
    assert_eq!(v["verdict"], "Stable");
    assert_eq!(v["caveat"], "asymptotic in beta");
}

#[test]
fn classify_writes_verdict_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let v = ok_json(&[
        "classify", "--rule", "general", "--alpha", "0.125", "--a", "24", "--b", "1", "--family",
        "ring", "--kappa", "0.2", "--out", out,
    ]);
    let back =
        sopslab_core::classify::StabilityVerdict::read_json(&dir.path().join("verdict.json"))
            .unwrap();
    assert_eq!(serde_json::to_value(&back).unwrap(), v);
}

#[test]
fn region_crossings_include_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let v = ok_json(&[
        "region",
        "--alpha",
        "0.125",
        "--a",
        "24",
        "--b",
        "1",
        "--delta",
        "0",
        "--samples",
        "256",
        "--out",
        out,
    ]);
    let xs: Vec<f64> = v["real_crossings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(
        xs.iter().any(|x| (x - 1.0).abs() < 1e-12),
        "crossings {xs:?}"
    );
    assert!(xs.iter().any(|&x| x < 0.98665) && xs.iter().any(|&x| x > 0.98665));

    // CSV and JSON hold the same boundary to text precision.
    let boundary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("region.json")).unwrap())
            .unwrap();
    let points = boundary["points"].as_array().unwrap();
    let (_, rows) = read_csv(&dir.path().join("region.csv"));
    assert_eq!(points.len(), rows.len());
    for (p, r) in points.iter().zip(&rows) {
        let l = p["lambda"].as_array().unwrap();
        assert!((l[0].as_f64().unwrap() - r[0]).abs() <= 1e-15 * (1.0 + r[0].abs()));
        assert!((l[1].as_f64().unwrap() - r[1]).abs() <= 1e-15 * (1.0 + r[1].abs()));
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok_json(&[
            "region",
            "--alpha",
            "0.125",
            "--a",
            "24",
            "--b",
            "1",
            "--out",
            d.path().to_str().unwrap(),
        ]);
    }
    for name in ["region.csv", "region.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap()
        );
    }
}

#[test]
fn sops_export_reimports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let v = ok_json(&[
        "sops", "--alpha", "0", "--a", "2", "--b", "1", "--beta", "10", "--h", "0.001", "--out",
        out,
    ]);
    let f = tanh_feedback(2.0, 1.0).unwrap();
    let s = import_sops(
        &dir.path().join("sops.csv"),
        &dir.path().join("sops.json"),
        &f,
    )
    .unwrap();
    assert_eq!(s.omega, v["sops"]["omega"].as_f64().unwrap());
    assert!((s.omega - 4.5).abs() < 0.01);
}

#[test]
fn floquet_trivial_multiplier() {
    let v = ok_json(&[
        "floquet", "--alpha", "0", "--a", "2", "--b", "1", "--beta", "10", "--h", "0.001", "--m",
        "64", "--lambda", "1",
    ]);
    let d = v["multipliers"][0]["dominant"].as_array().unwrap();
    assert!((d[0].as_f64().unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn simulate_from_synchronous_data_stays_synchronous() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"alpha": 0.125, "beta": 1.7, "feedback": {"family": "tanh", "a": 24, "b": 1},
            "coupling": {"family": "ring", "n": 3, "kappa": 0.2},
            "initial": {"kind": "constant", "value": [0.3]}, "horizon": 10, "h": 0.001}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let v = ok_json(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(v["max_g"].as_f64().unwrap() < 1e-12);
    let (header, rows) = read_csv(&out.join("sync.csv"));
    assert_eq!(header, ["t", "g"]);
    assert!(rows.iter().all(|r| r[1] >= 0.0 && r[1] < 1e-12));
}

#[test]
fn figure_bundle_has_one_file_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let v = ok_json(&["figure", "--horizon", "20", "--level", "0.9", "--out", out]);
    assert_eq!(v["runs"].as_array().unwrap().len(), 1);
    let (header, rows) = read_csv(&dir.path().join("figure_level_0.9.csv"));
    assert_eq!(header, ["t", "x1", "x2", "x3", "g", "log_g"]);
    assert_eq!(rows.len(), 201);
}

#[test]
fn invalid_inputs_exit_with_two() {
    let (code, err) = exit_code(&[
        "profile", "--alpha", "0", "--a", "2", "--b", "1", "--h", "0.3",
    ]);
    assert_eq!(code, 2, "{err}");
    let (code, err) = exit_code(&[
        "classify",
        "--rule",
        "mean-field",
        "--alpha",
        "0",
        "--a",
        "2",
        "--b",
        "1",
        "--kappa",
        "1",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("mean-field"), "{err}");
    let (code, err) = exit_code(&[
        "classify", "--rule", "ring", "--alpha", "0", "--a", "2", "--b", "1", "--kappa", "1.5",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("symmetric ring"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("g.csv");
    std::fs::write(&bad, "0.5,0.6\n0.5,0.5\n").unwrap();
    let (code, err) = exit_code(&[
        "classify",
        "--alpha",
        "0",
        "--a",
        "2",
        "--b",
        "1",
        "--matrix",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("row 0"), "{err}");
    let (code, _) = exit_code(&[
        "classify",
        "--alpha",
        "0",
        "--a",
        "2",
        "--b",
        "1",
        "--matrix",
        "/no/such/file.csv",
    ]);
    assert_eq!(code, 2);
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"alpha": 0, "gain": 3}"#).unwrap();
    let (code, _) = exit_code(&["profile", "--spec", spec.to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _) = exit_code(&[
        "sops", "--alpha", "0", "--a", "2", "--b", "1", "--beta", "1",
    ]);
    assert_eq!(code, 2);
    let (code, _) = exit_code(&["nonsense"]);
    assert_eq!(code, 2);
}

#[test]
fn numerical_failure_exits_with_three() {
    let (code, err) = exit_code(&[
        "sops", "--alpha", "0", "--a", "2", "--b", "1", "--beta", "10", "--h", "0.001", "--tol",
        "1e-16",
    ]);
    assert_eq!(code, 3, "{err}");
}
