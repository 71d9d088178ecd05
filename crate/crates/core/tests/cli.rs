use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isochron"))
}

fn shipped(name: &str) -> Value {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Example 1 with published coefficients, one σ, a few states and a small
/// verification set so every subcommand runs in well under a second.
fn small_config() -> Value {
    let mut v = shipped("example1_paper.json");
    v["experiment"]["sweep"] = json!([{ "sigma": 0.2, "periodic_period": 0.00079, "prior_tau_star": 0.00079 }]);
    v["experiment"]["initial_conditions"] = json!({ "sphere_boundary": { "count": 4, "radius": 1.0 } });
    v["experiment"]["t_end"] = json!(0.02);
    v["comparison"]["search"] = json!({ "training": 100, "verification_factor": 10 });
    v["manifold"]["directions"] = json!(8);
    v
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn table_is_deterministic_and_uses_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", &small_config());
    let art = dir.path().join("a.json");
    let o = run(&["synthesize", "--config", cfg.to_str().unwrap(), "--out", art.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut outputs = vec![];
    for (i, use_art) in [(0, true), (1, true), (2, false)] {
        let out = dir.path().join(format!("t{i}.csv"));
        let mut args = vec!["table", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        if use_art {
            args.extend(["--artifact", art.to_str().unwrap()]);
        }
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sigma,n_iter,periodic_ms,selftrig_prev_ms,selftrig_new_ms,event_ms,selftrig_upper_ms,samples");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.2,"));
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", &small_config());
    let a = run(&["synthesize", "--config", cfg.to_str().unwrap(), "--seed", "5"]);
    let b = run(&["synthesize", "--config", cfg.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let art: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(art["seed"], json!(5));
}

#[test]
fn low_comparison_order_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config();
    v["comparison"]["p_low"] = json!(1);
    let cfg = write(dir.path(), "c.json", &v);
    let o = run(&["table", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("p_low"));
}

#[test]
fn malformed_and_missing_configs_exit_1() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("broken.json");
    fs::write(&p, "{ \"model\": ").unwrap();
    assert_eq!(code(&run(&["table", "--config", p.to_str().unwrap()])), 1);
    assert_eq!(code(&run(&["table", "--config", "/nonexistent/config.json"])), 1);
    let mut v = small_config();
    v["model"]["extra"] = json!(true);
    let p = write(dir.path(), "extra.json", &v);
    assert_eq!(code(&run(&["table", "--config", p.to_str().unwrap()])), 1);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["table"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", &small_config());
    let o = run(&["manifold", "--config", cfg.to_str().unwrap(), "--kinds", "approx,bogus"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn no_initial_conditions_gives_header_only_table() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config();
    v["experiment"]["initial_conditions"] = json!({ "explicit": [] });
    let cfg = write(dir.path(), "c.json", &v);
    let o = run(&["table", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);
}

#[test]
fn zero_horizon_gives_header_only_trace() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config();
    v["experiment"]["t_end"] = json!(0.0);
    let cfg = write(dir.path(), "c.json", &v);
    let o = run(&["trace", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "sigma,strategy,index,t_s,inter_exec_ms\n");
}

#[test]
fn trace_writes_per_strategy_files() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config();
    let traces = dir.path().join("traces");
    v["output"] = json!({ "trace_dir": traces.to_str().unwrap() });
    let cfg = write(dir.path(), "c.json", &v);
    let o = run(&["trace", "--config", cfg.to_str().unwrap(), "--x0", "-0.4,0.7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut names: Vec<String> =
        fs::read_dir(&traces).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["event_sigma0.2.csv", "periodic_sigma0.2.csv", "prev_sigma0.2.csv", "selftrig_sigma0.2.csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("0.2,")));
}

#[test]
fn trigger_active_at_start_is_a_simulation_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", &small_config());
    // Γ(0, 0) = 0, so the first sample already meets the trigger
    let o = run(&["trace", "--config", cfg.to_str().unwrap(), "--x0", "0,0"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn unreachable_t_grid_is_infeasible() {
    let dir = TempDir::new().unwrap();
    let mut v = small_config();
    v["comparison"]["t_star"] = json!("auto");
    v["comparison"]["t_grid"] = json!({ "min": 1e-9, "max": 1e-8, "per_decade": 4, "directions": 8 });
    let cfg = write(dir.path(), "c.json", &v);
    let o = run(&["synthesize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn artifact_from_another_model_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", &small_config());
    let art = dir.path().join("a.json");
    assert_eq!(code(&run(&["synthesize", "--config", cfg.to_str().unwrap(), "--out", art.to_str().unwrap()])), 0);
    let mut other = small_config();
    other["model"]["k"] = json!(["-x2^3"]);
    let other = write(dir.path(), "o.json", &other);
    let o = run(&["table", "--config", other.to_str().unwrap(), "--artifact", art.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn manifold_emits_requested_kinds() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", &small_config());
    let o = run(&["manifold", "--config", cfg.to_str().unwrap(), "--kinds", "approx,sphere"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let kinds: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "approx").count(), 8);
    assert_eq!(kinds.iter().filter(|k| **k == "sphere").count(), 8);
    assert!(!kinds.contains(&"exact"));
}

#[test]
fn failed_verification_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", &small_config());
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(text.starts_with("sigma,model,p,sense,samples,violations,max_residual,passed\n"));
    // the published low-order coefficients violate the inequality on part of the region
    assert!(text.lines().nth(1).unwrap().ends_with(",false"));
    assert_eq!(code(&o), 2);
}
