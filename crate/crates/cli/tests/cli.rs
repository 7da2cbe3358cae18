use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vshmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vshmm"))
        .args(args)
        .env_remove("VSHMM_OUT")
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn averaged_has_one_row_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("avg");
    let o = vshmm(&["run", "--problem", "exp1", "--method", "averaged", "--dt", "1e-2", "--t-end", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("trajectory.csv")), 501);
    assert_eq!(summary(&out)["status"], "ok");
}

#[test]
fn exp1_vshmm_gives_macro_samples_and_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = vshmm(&[
        "run", "--problem", "exp1", "--method", "vshmm", "--eps", "1e-2", "--dt", "1e-4", "--alpha", "100,10", "--DT", "0.1",
        "--t-end", "5", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("trajectory.csv")), 51);
    let s = summary(&out);
    assert_eq!(s["samples"], 51);
    assert_eq!(s["rhs_evals"].as_array().unwrap().len(), 3);
    let sched = std::fs::read_to_string(out.join("schedule.csv")).unwrap();
    let last: f64 = sched.lines().last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((last - 0.1).abs() < 1e-12);
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = vshmm(&["run", "--problem", "oscillators", "--method", "const-split", "--t-end", "1.6", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn compare_self_is_zero_with_unit_cost() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("avg");
    assert!(vshmm(&["run", "--problem", "exp1", "--method", "averaged", "--t-end", "1", "--out", out.to_str().unwrap()]).status.success());
    let f = out.join("trajectory.csv");
    let o = vshmm(&["compare", f.to_str().unwrap(), f.to_str().unwrap()]);
    assert!(o.status.success());
    let m: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["sup_error"], 0.0);
    assert_eq!(m["l2_error"], 0.0);
    assert_eq!(m["cost_ratio"], 1.0);
}

#[test]
fn compare_rejects_mismatched_time_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(vshmm(&["run", "--problem", "exp1", "--method", "averaged", "--dt", "0.03", "--t-end", "0.3", "--out", a.to_str().unwrap()]).status.success());
    assert!(vshmm(&["run", "--problem", "exp1", "--method", "averaged", "--dt", "0.02", "--t-end", "0.3", "--out", b.to_str().unwrap()]).status.success());
    let o = vshmm(&["compare", a.join("trajectory.csv").to_str().unwrap(), b.join("trajectory.csv").to_str().unwrap()]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "time_grid_mismatch");
}

#[test]
fn invalid_config_writes_error_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let o = vshmm(&["run", "--problem", "exp1", "--method", "vshmm", "--alpha", "10,100", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    let s = summary(&out);
    assert_eq!(s["status"], "error");
    assert_eq!(s["error"]["kind"], "config");
}

#[test]
fn blow_up_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("blow");
    // dt / eps^2 = 100 is far outside the RK4 stability region
    let o = vshmm(&["run", "--problem", "exp1", "--method", "dns", "--eps", "1e-2", "--dt", "1e-2", "--t-end", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let s = summary(&out);
    assert_eq!(s["error"]["kind"], "blow_up");
    assert!(s["error"]["t"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[run]\nproblem = \"exp1\"\nmethod = \"averaged\"\ndt = 0.01\nt-end = 5.0\n").unwrap();
    let out = tmp.path().join("c");
    let o = vshmm(&["run", "--config", cfg.to_str().unwrap(), "--t-end", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("trajectory.csv")), 101);
}

#[test]
fn env_var_sets_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_vshmm"))
        .args(["run", "--problem", "exp1", "--method", "averaged", "--t-end", "0.5"])
        .env("VSHMM_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(rows(&out.join("trajectory.csv")), 51);
}

#[test]
fn reference_metrics_include_cost_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let dns = tmp.path().join("dns");
    let v = tmp.path().join("v");
    let o = vshmm(&["run", "--problem", "exp1", "--method", "dns", "--eps", "0.1", "--dt", "1e-4", "--DT", "0.1", "--t-end", "1", "--out", dns.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = dns.join("trajectory.csv");
    let o = vshmm(&[
        "run", "--problem", "exp1", "--method", "vshmm", "--eps", "0.1", "--t-end", "1", "--reference", r.to_str().unwrap(),
        "--columns", "xi", "--out", v.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = &summary(&v)["metrics"];
    assert_eq!(m["samples"], 11);
    assert!(m["cost_ratio"].as_f64().unwrap() > 1.0);
}

#[test]
fn sweep_runs_each_entry_in_its_own_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "[defaults]\nproblem = \"exp1\"\nt-end = 1.0\n\n[[runs]]\nname = \"avg\"\nmethod = \"averaged\"\n\n[[runs]]\nname = \"split\"\nmethod = \"const-split\"\n",
    )
    .unwrap();
    let out = tmp.path().join("sweep");
    let o = vshmm(&["sweep", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("avg/trajectory.csv")), 101);
    assert_eq!(rows(&out.join("split/trajectory.csv")), 11);
}

#[test]
fn torus_writes_point_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("torus");
    let o = vshmm(&["torus", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(rows(&out.join("torus_constant.csv")), 60);
    assert_eq!(rows(&out.join("torus_variable.csv")), 60);
    let s = summary(&out);
    assert!(s["covering_radius"]["variable"].as_f64() < s["covering_radius"]["constant"].as_f64());
}

#[test]
fn pde_vshmm_writes_snapshots_and_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pde");
    let o = vshmm(&["run", "--problem", "diffusion", "--method", "pde-vshmm", "--dt", "1e-5", "--alpha", "150,18,1.5", "--t-end", "0.1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("trajectory.csv")), 3);
    for t in ["0.000000", "0.050000", "0.100000"] {
        assert!(out.join(format!("coeffs_t{t}.csv")).exists());
        assert_eq!(rows(&out.join(format!("snapshots/u_t{t}.csv"))), 2048);
    }
    let c: Value = serde_json::from_str(&std::fs::read_to_string(out.join("clusters.json")).unwrap()).unwrap();
    assert_eq!(c["clusters"].as_array().unwrap().len(), 4);
}

#[test]
fn pde_dns_clusters_from_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pde");
    let o = vshmm(&[
        "run", "--problem", "advection", "--method", "pde-dns", "--n", "512", "--dt", "1e-3", "--DT", "0.5", "--t-end", "0.5",
        "--lambda", "1e-3", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c: Value = serde_json::from_str(&std::fs::read_to_string(out.join("clusters.json")).unwrap()).unwrap();
    assert!(!c["clusters"].as_array().unwrap().is_empty());
    assert!(out.join("thresholded_t0.500000.csv").exists());
}

#[test]
fn eps_is_rejected_for_pde_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vshmm(&["run", "--problem", "diffusion", "--method", "pde-dns", "--eps", "0.1", "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
