use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tailbound::harness::{sample_distribution, DistSpec};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tailbound-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn lognormal_csv(dir: &Path) -> PathBuf {
    let s = sample_distribution(&DistSpec::Lognormal { mu: 0.0, sigma: 1.0 }, 800, 17).unwrap();
    let mut text = String::from("x\n");
    for v in s.values() {
        text.push_str(&format!("{v}\n"));
    }
    let path = dir.join("data.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailbound")).args(args).output().expect("spawn tailbound")
}

fn json_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn bound_prob_reports_a_probability_per_threshold() {
    let dir = scratch("prob");
    let data = lognormal_csv(&dir);
    let v = json_ok(&[
        "--data", data.to_str().unwrap(), "--seed", "3", "bound-prob", "--order", "2", "--set", "chi2",
        "--threshold", "0.7,0.8", "--bootstrap-b", "200", "--lo", "8", "--hi", "inf",
    ]);
    let best = v["bound"]["value"].as_f64().unwrap();
    assert!(best > 0.0 && best < 0.3, "bound {best}");
    let per = v["per_threshold"].as_array().unwrap();
    assert_eq!(per.len(), 2);
    let min = per.iter().map(|r| r["value"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(min, best);
}

#[test]
fn same_seed_same_output() {
    let dir = scratch("seed");
    let data = lognormal_csv(&dir);
    let args = [
        "--data", data.to_str().unwrap(), "--seed", "9", "bound-prob", "--order", "1", "--set", "ks",
        "--threshold", "0.75", "--bootstrap-b", "150", "--lo", "5",
    ];
    // everything except wall-clock timings must repeat exactly
    let strip = |mut v: Value| {
        v["bound"]["runtime_ms"] = Value::Null;
        for r in v["per_threshold"].as_array_mut().unwrap() {
            r["runtime_ms"] = Value::Null;
        }
        v
    };
    assert_eq!(strip(json_ok(&args)), strip(json_ok(&args)));
}

#[test]
fn bound_quantile_lies_beyond_the_threshold() {
    let dir = scratch("quant");
    let data = lognormal_csv(&dir);
    let v = json_ok(&[
        "--data", data.to_str().unwrap(), "bound-quantile", "--order", "2", "--set", "chi2", "--threshold", "0.7",
        "--bootstrap-b", "200", "--p", "0.95",
    ]);
    let a = v["per_threshold"][0]["threshold_used"].as_f64().unwrap();
    let q = v["bound"]["value"].as_f64().unwrap();
    assert!(q > a, "q {q} a {a}");
}

#[test]
fn calibrate_csv_has_one_row_per_threshold() {
    let dir = scratch("calib");
    let data = lognormal_csv(&dir);
    let out = run(&[
        "--data", data.to_str().unwrap(), "--format", "csv", "calibrate", "--order", "2", "--set", "chi2",
        "--threshold", "0.6,0.7,0.8", "--bootstrap-b", "100",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "threshold,order,eta_lo,eta_hi,nu,mass_max");
    assert_eq!(lines.len(), 4);
}

#[test]
fn conserv_pareto_limit() {
    let v = json_ok(&["conserv", "--dist", "pareto", "--tail-index", "1", "--x", "1", "--a", "10,100"]);
    assert!(v["limit_ratio"].as_f64().unwrap() > 1.0);
    assert_eq!(v["finite"].as_array().unwrap().len(), 2);
}

#[test]
fn pot_writes_plot_and_json() {
    let dir = scratch("pot");
    let data = lognormal_csv(&dir);
    let svg = dir.join("me.svg");
    let v = json_ok(&["--data", data.to_str().unwrap(), "--plot", svg.to_str().unwrap(), "pot", "--lo", "6", "--hi", "8"]);
    let (est, up) = (v["estimate"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    assert!(up >= est);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn experiment_runs_from_config_file() {
    let dir = scratch("exp");
    let cfg = dir.join("exp.json");
    std::fs::write(
        &cfg,
        r#"{
            "distribution": { "family": "pareto", "shape": 2.0, "scale": 1.0 },
            "n": 300, "reps": 3,
            "objective": { "kind": "quantile_interval", "lhs": 0.95, "rhs": 0.96 },
            "methods": [{ "method": "dro", "setting": { "order": 1, "set": "rectangle" },
                          "thresholds": { "kind": "quantile_of_sample", "levels": [0.7] } }],
            "bootstrap_B": 100, "seed": 1
        }"#,
    )
    .unwrap();
    let records = dir.join("records.csv");
    let out = run(&["--config", cfg.to_str().unwrap(), "--format", "csv", "experiment", "--sequential", "--records", records.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 4);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = scratch("bad");
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, r#"{ "distribution": { "family": "gamma", "shape": 1, "scale": 1 }, "n": 100, "reps": 1,
        "objective": { "kind": "quantile", "p": 0.9 }, "methods": [], "typo": 1 }"#)
        .unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "experiment"]);
    assert!(!out.status.success());
}

#[test]
fn missing_data_is_an_error() {
    let out = run(&["bound-prob", "--lo", "1"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
