use serde_json::Value;
use std::process::{Command, Output};

fn kfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfp")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn operator_info_reports_dimensions() {
    let v = json(&kfp(&["operator", "info", "--catalog", "kramers"]));
    let r = &v["result"];
    assert_eq!(r["D0"].as_f64(), Some(4.0));
    assert_eq!(r["Dinf"].as_f64(), Some(2.0));
    assert_eq!(r["kalman_rank"].as_u64(), Some(2));
    assert!(v["config"].is_object());
}

#[test]
fn kernel_eval_is_the_heat_kernel() {
    let v = json(&kfp(&["kernel", "eval", "--catalog", "laplace:1", "--x", "0", "--y", "-0.5", "--t", "0.25"]));
    let want = (std::f64::consts::PI).powf(-0.5) * (-0.25f64).exp();
    let got = v["result"]["density"].as_f64().unwrap();
    assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
}

#[test]
fn perimeter_csv_has_header_and_columns() {
    let out = kfp(&["perimeter", "--catalog", "laplace:1", "--region", "interval:1", "--s", "0.25", "--samples", "2000", "--near-decades", "6"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("measure,s,per_value,quad_err,mc_err,ratio"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(row[0], 1.0);
    assert!((row[2] - 3.1915382).abs() < 0.2, "{row:?}");
    assert!(text.starts_with("# kfp "));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res").join("k.json");
    let cfg = dir.path().join("exp.json");
    let body = serde_json::json!({
        "operator": "kolmogorov",
        "task": "kernel",
        "params": {"x": [0.0, 0.0], "y": [0.1, 0.0], "t": 1.0},
        "output": {"path": out, "format": "json"}
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let run = kfp(&["--config", cfg.to_str().unwrap()]);
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(v["result"]["density"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| kfp(args).status.code();
    assert_eq!(code(&["frobnicate"]), Some(64));
    assert_eq!(code(&["--config", "/nonexistent/exp.json"]), Some(66));
    // Fractional perimeter needs tr B ≥ 0.
    assert_eq!(code(&["perimeter", "--catalog", "ornstein_uhlenbeck:1", "--region", "interval:1", "--s", "0.25"]), Some(2));
    // Order outside (0, 1).
    assert_eq!(code(&["frac", "apply", "--catalog", "laplace:1", "--s", "1.5"]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
}

#[test]
fn failed_verification_exits_nonzero() {
    let out = kfp(&["verify", "--only", "3", "--kernel-scale", "1.01", "--samples", "20000"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let clean = kfp(&["verify", "--only", "1,2,4,5"]);
    assert!(clean.status.success());
}
