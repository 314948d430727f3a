use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vla-roofline"))
        .args(args)
        .env_remove("VLA_ROOFLINE_CONFIG")
        .env_remove("VLA_ROOFLINE_PRESET_PATH")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let o = run(&all);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn analyze_default_model_on_b100() {
    let v = json(&["analyze", "--model", "pi0", "--hw", "b100"]);
    let row = &v["rows"][0];
    let e2e = row["e2e_ms"].as_f64().unwrap();
    assert!((e2e - 3.12).abs() < 0.01, "{e2e}");
    assert_eq!(row["action_bound"], "Memory");
    assert_eq!(row["status"], "ok");
}

#[test]
fn oversized_model_is_reported_not_rejected() {
    let v = json(&["analyze", "--model", "pi0-xl", "--hw", "rtx4090"]);
    let row = &v["rows"][0];
    assert!(row["e2e_ms"].is_null());
    assert!(row["status"].as_str().unwrap().starts_with("N/A"));
}

#[test]
fn edge_placement_adds_network_legs() {
    let v = json(&["analyze", "--hw", "b100", "--net", "5g", "--async"]);
    let row = &v["rows"][0];
    assert!(row["upload_ms"].as_f64().unwrap() > 10.0);
    let a = row["async_hz"].as_f64().unwrap();
    assert!((a / 215.3 - 1.0).abs() < 0.03, "{a}");
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["reproduce", "T7"][..],
        &["analyze", "--model", "no-such-model"],
        &["analyze", "--bogus-flag"],
        &["sweep", "--axis", "colour=red"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn reproduce_exit_codes() {
    let o = run(&["reproduce", "T3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
    let o = run(&["reproduce", "T9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn csv_output_has_header_and_rows() {
    let o = run(&["sweep", "--axis", "hw=thor,b100", "--axis", "chunk=10,50", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "e2e_ms"));
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[0][1], "thor on-device");
    assert_eq!(&rows[3][1], "b100 on-device");
}

#[test]
fn sweep_without_axes_matches_analyze() {
    let a = json(&["analyze", "--model", "pi0", "--hw", "h100"]);
    let s = json(&["sweep", "--model", "pi0", "--hw", "h100"]);
    assert_eq!(a["rows"], s["rows"]);
}

#[test]
fn output_is_deterministic() {
    let args = ["sweep", "--axis", "steps=1,5,10", "--axis", "decoding=diffusion,autoregressive", "--format", "csv"];
    let first = stdout(&run(&args));
    for _ in 0..3 {
        assert_eq!(stdout(&run(&args)), first);
    }
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("result.json");
    let o = run(&["analyze", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v["rows"][0]["e2e_ms"].is_number());
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("lab.toml");
    std::fs::write(
        &path,
        r#"
[hardware.lab-gpu]
BF16_TFLOPS = 875
FP32_TFLOPS = 30
Memory_GB = 96
HBM_BW_GBs = 4000

[networks.lab-lan]
bandwidth_mbps = 1000
base_latency_ms = 0.1

[run]
model = "pi0"
hw = "lab-gpu"
"#,
    )
    .unwrap();
    path
}

#[test]
fn config_file_adds_presets_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let lab = json(&["analyze", "--config", cfg.to_str().unwrap()]);
    let b100 = json(&["analyze", "--hw", "b100"]);
    let t_lab = lab["rows"][0]["e2e_ms"].as_f64().unwrap();
    let t_b100 = b100["rows"][0]["e2e_ms"].as_f64().unwrap();
    // half the peak and half the bandwidth of b100 doubles every op time
    assert!((t_lab / t_b100 - 2.0).abs() < 0.01, "{t_lab} {t_b100}");

    let o = run(&["list-presets", "--config", cfg.to_str().unwrap()]);
    let text = stdout(&o);
    assert!(text.contains("lab-gpu") && text.contains("lab-lan"));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[hardware.x]\nBF16_TFLOPS = 1\n").unwrap();
    let o = run(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
