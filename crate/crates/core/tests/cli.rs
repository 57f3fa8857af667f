use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use raman_memory::harness::ExperimentConfig;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raman-memory")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> serde_json::Value {
    let out = cli(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pressure_scan_outputs_are_reproducible_across_pool_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["pressure-scan", "--out", s(&a), "--jobs", "1"]);
    run_ok(&["pressure-scan", "--out", s(&b), "--jobs", "3", "--seed", "7"]);
    let csv = fs::read(a.join("pressure_scan.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("pressure_scan.csv")).unwrap());
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(b.join("pressure_scan.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config_hash"], ExperimentConfig::default().hash());
    let header = String::from_utf8(csv).unwrap();
    assert!(header.starts_with("pressure_bar,eta_w,eta_w_matched,eta_r,eta_tot,coupling_g,error\n"));
}

#[test]
fn persisted_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["linearity-scan", "--out", s(&a)]);
    run_ok(&["linearity-scan", "--config", s(&a.join("config.toml")), "--out", s(&b)]);
    assert_eq!(
        fs::read(a.join("linearity_scan.csv")).unwrap(),
        fs::read(b.join("linearity_scan.csv")).unwrap()
    );
    run_ok(&["linearity-scan", "--config", s(&a.join("config.toml")), "--out", s(&b)]);
    let log = fs::read_to_string(b.join("run_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn delay_scan_then_spectrum_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let summary = run_ok(&["delay-scan", "--out", s(out)]);
    assert_eq!(summary["peaks_cm1"].as_array().unwrap().len(), 5);
    for f in ["delay_scan.csv", "spectrum.csv", "write_transmitted.csv", "delay_scan.json", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let spectrum = run_ok(&["spectrum", "--input", s(&out.join("delay_scan.csv")), "--out", s(&out.join("again"))]);
    let first = summary["peaks_cm1"][0].as_f64().unwrap();
    assert!((spectrum["peaks"][0]["wavenumber"].as_f64().unwrap() - first).abs() < 1e-6);
    let envelope = fs::read_to_string(out.join("write_transmitted.csv")).unwrap();
    assert!(envelope.starts_with("tau_fs,re,im\n"));
}

#[test]
fn calibrate_fit_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cal = run_ok(&["calibrate", "--out", s(out)]);
    assert!((cal["coupling_at_anchor"].as_f64().unwrap() - 6.5).abs() < 1e-9);
    let calibrated = ExperimentConfig::load(&out.join("calibrated.toml")).unwrap();
    assert_eq!(calibrated.calibration_id, "anchor-g6.5-p13");

    run_ok(&["pressure-scan", "--out", s(out)]);
    let fit = run_ok(&["fit", "--data", s(&out.join("pressure_scan.csv")), "--free", "alpha", "--out", s(out)]);
    assert!((fit["values"][0].as_f64().unwrap() - 0.35).abs() < 1e-9);
    assert!(out.join("fit.json").exists());

    let report = run_ok(&["report", "--out", s(out)]);
    let bins = report["time_bins"]["bins"].as_f64().unwrap();
    assert!((5e3..=2e4).contains(&bins));
}

#[test]
fn failures_exit_nonzero_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "calibration_id = 3\n").unwrap();
    let e = error_json(&cli(&["report", "--config", s(&bad), "--out", s(dir.path())]));
    assert_eq!(e["kind"], "parse");

    let mut c = ExperimentConfig::default();
    c.medium.pressure_bar = 40.0;
    let out_of_range = dir.path().join("range.toml");
    fs::write(&out_of_range, c.to_toml().unwrap()).unwrap();
    let e = error_json(&cli(&["report", "--config", s(&out_of_range)]));
    assert_eq!(e["kind"], "config");

    let e = error_json(&cli(&["fit", "--data", s(&dir.path().join("missing.csv")), "--out", s(dir.path())]));
    assert_eq!(e["kind"], "parse");
    assert!(e["error"].as_str().unwrap().contains("missing.csv"));

    let e = error_json(&cli(&["pressure-scan", "--jobs", "0", "--out", s(dir.path())]));
    assert_eq!(e["kind"], "config");

    let mut coarse = ExperimentConfig::default();
    coarse.grid.nt = 64;
    let coarse_path = dir.path().join("coarse.toml");
    fs::write(&coarse_path, coarse.to_toml().unwrap()).unwrap();
    let e = error_json(&cli(&["delay-scan", "--config", s(&coarse_path), "--out", s(dir.path())]));
    assert_eq!(e["kind"], "grid");
}

#[test]
fn relative_data_paths_resolve_against_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("lines.csv"),
        "v,vp,J,wavenumber\n0,1,0,4161.169\n0,1,1,4155.255\n0,1,2,4143.465\n0,1,3,4125.871\n",
    )
    .unwrap();
    let mut c = ExperimentConfig::default();
    c.medium.line_mode = raman_memory::harness::LineMode::Empirical;
    c.medium.empirical_lines_path = Some("lines.csv".into());
    let path = dir.path().join("exp.toml");
    fs::write(&path, c.to_toml().unwrap()).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    let lines = loaded.constants().unwrap().empirical_lines.unwrap();
    assert_eq!(lines.len(), 4);
}
