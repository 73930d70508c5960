use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn starflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starflow")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, flow: &str, grid: &str, body: &str, extra: &str) -> String {
    let text = format!("[flow]\n{flow}\n\n[grid]\n{grid}\n\n[body]\npreset = \"{body}\"\n{extra}");
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_GRID: &str = "n_theta = 16\nn_phi = 32";

#[test]
fn stationary_sphere_converges_immediately() {
    let dir = TempDir::new().unwrap();
    let flow = "ambient = \"euclidean\"\nalpha = 0.0\nbeta = 1.0\nf = \"ratio(1,0)\"";
    let cfg = write_config(dir.path(), "c.toml", flow, SMALL_GRID, "sphere(1.0)", "");
    let out = dir.path().join("out");
    let o = starflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Converged after 0 steps"));
    let report = starflow(&["report", "--series", out.join("series.csv").to_str().unwrap()]);
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    for line in text.lines().skip_while(|l| !l.contains("final margins")).skip(1) {
        let margin: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
        assert!(margin.abs() <= 1e-8, "{line}");
    }
}

#[test]
fn bumpy_run_decays_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let flow = "ambient = \"euclidean\"\nalpha = 0.0\nbeta = 1.0\nf = \"ratio(2,1)\"\nt_end = 1.0";
    let extra = "\n[run]\ncadence = 20\nseed = 3\n\n[quantities]\niotas = [1.0]\nks = [2]\ninequalities = false\n";
    let cfg = write_config(dir.path(), "c.toml", flow, SMALL_GRID, "bumpy(1.0,0.1,4)", extra);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = starflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["series.csv", "monitor.log", "summary.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let report = starflow(&["report", "--series", a.join("series.csv").to_str().unwrap()]);
    let text = String::from_utf8_lossy(&report.stdout).into_owned();
    assert!(text.contains("S(1,2)                   invariant"), "{text}");
    let rate_line = text.lines().find(|l| l.contains("decay rate=")).unwrap();
    let r2: f64 = rate_line.rsplit("R2=").next().unwrap().parse().unwrap();
    let rate: f64 = rate_line.split("rate=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(rate > 0.0 && r2 >= 0.99, "{rate_line}");
}

#[test]
fn out_of_range_rejected_before_compute() {
    let dir = TempDir::new().unwrap();
    let flow = "ambient = \"euclidean\"\nalpha = 0.0\nbeta = 1.5\nf = \"ratio(1,0)\"\nmode = \"unnormalized\"\nt_end = 0.01";
    let cfg = write_config(dir.path(), "c.toml", flow, SMALL_GRID, "sphere(1.0)", "");
    let out = dir.path().join("out");
    let o = starflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flow.beta"));
    assert!(!out.exists());
    let o = starflow(&["run", "--config", &cfg, "--allow-out-of-range", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("series.csv").exists());
}

#[test]
fn monitor_violation_writes_failure_record() {
    let dir = TempDir::new().unwrap();
    let flow = "ambient = \"euclidean\"\nalpha = 0.0\nbeta = 1.0\nf = \"ratio(2,0)\"\nt_end = 0.5";
    let cfg = write_config(dir.path(), "c.toml", flow, SMALL_GRID, "ellipsoid(0.2,1.0,5.0)", "");
    let out = dir.path().join("out");
    let o = starflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("failure.json")).unwrap()).unwrap();
    assert_eq!(record["kind"], "monitor");
    assert_eq!(record["t"], 0.0);
    assert!(record["node"].is_u64());
    assert!(record["message"].as_str().unwrap().contains("left cone"));
}

#[test]
fn report_rejects_malformed_series() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("series.csv");
    std::fs::write(&path, "t,x\n1,2\n").unwrap();
    let o = starflow(&["report", "--series", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
}

#[test]
fn bad_config_reports_key_and_line() {
    let dir = TempDir::new().unwrap();
    let flow = "ambient = \"euclidean\"\nalpha = 0.0\nbeta = 0.0\nf = \"ratio(1,0)\"";
    let cfg = write_config(dir.path(), "c.toml", flow, SMALL_GRID, "sphere(1.0)", "");
    let o = starflow(&["run", "--config", &cfg]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(1));
    assert!(err.contains("line 4") && err.contains("flow.beta") && err.contains("β > 0"), "{err}");
}
