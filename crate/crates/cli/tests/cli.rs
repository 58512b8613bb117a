use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lcrm(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcrm"))
        .args(args)
        .env("LCRM_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(root: &Path, n: &str, seed: &str) -> std::path::PathBuf {
    let dir = root.join(format!("sim_{n}_{seed}"));
    stdout_json(&lcrm(&["simulate", "--n", n, "--seed", seed, "--out", dir.to_str().unwrap()], root));
    dir
}

const SHORT: [&str; 6] = ["--iterations", "600", "--burn-in", "200", "--starts", "2"];

#[test]
fn simulate_is_byte_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    for dir in [&a, &b] {
        stdout_json(&lcrm(&["simulate", "--n", "300", "--seed", "7", "--out", dir.to_str().unwrap()], root.path()));
    }
    for file in ["data.csv", "truth.json", "config.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let c = root.path().join("c");
    let cfg = a.join("config.json");
    stdout_json(&lcrm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap()], root.path()));
    assert_eq!(fs::read(a.join("data.csv")).unwrap(), fs::read(c.join("data.csv")).unwrap());
}

#[test]
fn output_root_comes_from_the_environment() {
    let root = tempfile::tempdir().unwrap();
    let v = stdout_json(&lcrm(&["simulate", "--n", "20"], root.path()));
    assert_eq!(v["command"], "simulate");
    assert!(root.path().join("simulate").join("data.csv").exists());
}

#[test]
fn usage_errors_are_json() {
    let root = tempfile::tempdir().unwrap();
    let out = lcrm(&["fit", "--no-such-flag"], root.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");
    let out = lcrm(&["frobnicate"], root.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn schema_mismatch_is_reported() {
    let root = tempfile::tempdir().unwrap();
    let sim = simulate(root.path(), "50", "1");
    let data = sim.join("data.csv");
    let out = lcrm(&["check", "--data", data.to_str().unwrap(), "--x", "nope"], root.path());
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "parse");
    assert!(err["error"]["message"].as_str().unwrap().contains("nope"));
}

#[test]
fn check_names_the_failed_condition() {
    let root = tempfile::tempdir().unwrap();
    let path = root.path().join("d.csv");
    // events at 0.1..=0.8, censoring from 2 on
    let mut csv = String::from("time,event,x1\n");
    for i in 0..8 {
        csv.push_str(&format!("{},1,{}\n", 0.1 + 0.1 * i as f64, i % 3));
    }
    for i in 0..8 {
        csv.push_str(&format!("{},0,{}\n", 2.0 + i as f64, i % 2));
    }
    fs::write(&path, csv).unwrap();
    let data = path.to_str().unwrap();

    let out = lcrm(&["check", "--data", data, "--cuts", "0.5,1.5"], root.path());
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "propriety");
    assert_eq!(err["error"]["failed_conditions"], serde_json::json!(["(ii)"]));
    let report = read_json(&root.path().join("check").join("check.json"));
    assert_eq!(report["report"]["events_per_interval"], serde_json::json!([5, 3, 0]));

    // more intervals than distinct event times
    let err = stderr_json(&lcrm(&["check", "--data", data, "--J", "12"], root.path()));
    let failed = err["error"]["failed_conditions"].as_array().unwrap();
    assert!(failed.contains(&serde_json::json!("(ii)")));

    let ok = stdout_json(&lcrm(&["check", "--data", data, "--J", "2"], root.path()));
    assert_eq!(ok["result"]["report"]["passes"], true);
}

#[test]
fn default_simulation_passes_the_check() {
    let root = tempfile::tempdir().unwrap();
    let sim = simulate(root.path(), "1000", "3");
    let data = sim.join("data.csv");
    let ok = stdout_json(&lcrm(&["check", "--data", data.to_str().unwrap(), "--J", "2", "--x", "x1,x2", "--z", "x3,x4"], root.path()));
    assert_eq!(ok["result"]["report"]["passes"], true);
}

#[test]
fn fit_compare_classify_pipeline() {
    let root = tempfile::tempdir().unwrap();
    let sim = simulate(root.path(), "200", "11");
    let data = sim.join("data.csv");
    let data = data.to_str().unwrap();
    let fit_dir = root.path().join("fit");
    let mut args = vec!["fit", "--data", data, "--x", "x1,x2", "--z", "x3,x4", "--G", "2", "--J", "2"];
    args.extend(SHORT);
    args.extend(["--out", fit_dir.to_str().unwrap()]);
    let v = stdout_json(&lcrm(&args, root.path()));
    assert_eq!(v["result"]["draws"], 80);
    for file in ["config.json", "summary.json", "cpo.csv", "archive/draws.csv", "archive/archive.json"] {
        assert!(fit_dir.join(file).exists(), "{file}");
    }
    let summary = read_json(&fit_dir.join("summary.json"));
    assert_eq!(summary["cure_rates"].as_array().unwrap().len(), 2);
    let config = read_json(&fit_dir.join("config.json"));
    assert_eq!(config["prior"]["c0"], 2.5);
    assert_eq!(config["prior"]["c02"], 3.0);

    // the sidecar reproduces the run exactly
    let again = root.path().join("again");
    let cfg_path = fit_dir.join("config.json");
    stdout_json(&lcrm(&["fit", "--config", cfg_path.to_str().unwrap(), "--out", again.to_str().unwrap()], root.path()));
    for file in ["archive/draws.csv", "archive/archive.json", "summary.json"] {
        let a = fs::read_to_string(fit_dir.join(file)).unwrap();
        let b = fs::read_to_string(again.join(file)).unwrap();
        assert_eq!(a.replace(fit_dir.to_str().unwrap(), ""), b.replace(again.to_str().unwrap(), ""), "{file}");
    }

    // compare reproduces the single-fit numbers exactly
    let cmp_dir = root.path().join("cmp");
    let mut args = vec!["compare", "--data", data, "--x", "x1,x2", "--z", "x3,x4", "--models", "lcrm,cox", "--G", "2", "--J", "1,2"];
    args.extend(SHORT);
    args.extend(["--out", cmp_dir.to_str().unwrap()]);
    let v = stdout_json(&lcrm(&args, root.path()));
    let rows = v["result"]["table"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let cell = rows.iter().find(|r| r["model"] == "lcrm" && r["intervals"] == 2).unwrap();
    assert_eq!(cell["lpml"], summary["criteria"]["lpml"]);
    assert_eq!(cell["dic"], summary["criteria"]["dic"]);
    assert!(cmp_dir.join("comparison.csv").exists());

    // classification at t = 0 and t = inf
    let cls_dir = root.path().join("cls");
    let fit = fit_dir.to_str().unwrap();
    let mut base = vec!["classify", "--fit", fit, "--x", "0.5,-1", "--z", "1,0", "--out", cls_dir.to_str().unwrap()];
    base.extend(["--at-time", "inf"]);
    let v = stdout_json(&lcrm(&base, root.path()));
    let probs: Vec<f64> = serde_json::from_value(v["result"]["probabilities"].clone()).unwrap();
    assert_eq!(probs.len(), 2);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(v["result"]["at_time"], "inf");
    let report = read_json(&cls_dir.join("report.json"));
    assert_eq!(report["probs_at_t"].as_array().unwrap().len(), 52);
    let survival = fs::read_to_string(cls_dir.join("survival.csv")).unwrap();
    assert!(survival.starts_with("t,group,survival\n"));
    assert_eq!(survival.lines().count(), 1 + 51 * 3);
    assert!(cls_dir.join("probabilities.csv").exists());

    let bad = lcrm(&["classify", "--fit", fit, "--x", "0.5", "--z", "1,0"], root.path());
    assert_eq!(stderr_json(&bad)["error"]["kind"], "other");
}

#[test]
fn propriety_failure_blocks_fit_unless_forced() {
    let root = tempfile::tempdir().unwrap();
    let sim = simulate(root.path(), "100", "5");
    let data = sim.join("data.csv");
    let data = data.to_str().unwrap();
    // a cut beyond every observed time leaves the last interval empty
    let mut args = vec!["fit", "--data", data, "--x", "x1,x2", "--z", "x3,x4", "--G", "2", "--cuts", "1000"];
    args.extend(SHORT);
    let err = stderr_json(&lcrm(&args, root.path()));
    assert_eq!(err["error"]["kind"], "propriety");
    args.push("--force");
    let v = stdout_json(&lcrm(&args, root.path()));
    assert!(!v["result"]["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn compare_over_a_group_range_reports_model_probabilities() {
    let root = tempfile::tempdir().unwrap();
    let sim = simulate(root.path(), "150", "2");
    let data = sim.join("data.csv");
    let mut args = vec!["compare", "--data", data.to_str().unwrap(), "--x", "x1,x2", "--z", "x3,x4", "--G", "1..2", "--J", "1"];
    args.extend(SHORT);
    let v = stdout_json(&lcrm(&args, root.path()));
    let table = &v["result"]["table"];
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
    let mp = &table["model_probabilities"][0];
    let probs: Vec<f64> = serde_json::from_value(mp["probabilities"].clone()).unwrap();
    assert_eq!(probs.len(), 2);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(root.path().join("compare/rj/J1/draws.csv").exists());
}
