use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CONFIG: &str = r#"{
  "dataset": {"source": "margin", "n": 400, "d": 5, "rho_star": 0.1, "r": 1.0, "seed": 1},
  "train_loss": {"kind": "logistic"},
  "step_policy": {"kind": "adaptive_weight", "beta": 1.0, "rho": 1.0,
                  "pi": {"family": "abs_error_proportional", "omega": 1.0}},
  "seed": 3
}"#;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aws-sgd")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_one_row_per_step() {
    let dir = setup();
    let o = bin(&["run", "--config", "cfg.json", "--out", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(dir.path().join("r/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 401);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 400);
    assert!(dir.path().join("r/model.json").is_file());
}

#[test]
fn fixed_seed_is_byte_identical() {
    let dir = setup();
    for out in ["a", "b"] {
        assert!(bin(&["run", "--config", "cfg.json", "--seed", "7", "--out", out], dir.path()).status.success());
    }
    let a = fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let b = fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_eq!(a, b);
    assert!(bin(&["run", "--config", "cfg.json", "--seed", "8", "--out", "c"], dir.path()).status.success());
    assert_ne!(a, fs::read(dir.path().join("c/metrics.csv")).unwrap());
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = setup();
    let o = bin(&["run", "--config", "cfg.json", "--out", "r", "--set", "step_policy.bogus=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("step_policy"), "{}", stderr(&o));

    let o = bin(&["run", "--config", "cfg.json", "--out", "r", "--set", "step_policy.beta=-1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));

    let o = bin(
        &["run", "--config", "cfg.json", "--out", "r", "--set", r#"dataset={"source":"libsvm","path":"missing.txt"}"#],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.txt"), "{}", stderr(&o));

    assert_eq!(bin(&["run", "--config", "nope.json", "--out", "r"], dir.path()).status.code(), Some(2));
    assert_eq!(bin(&["run", "--bogus-flag"], dir.path()).status.code(), Some(2));
}

#[test]
fn verify_exit_codes_and_output() {
    let dir = setup();
    assert_eq!(bin(&["verify", "nosuch"], dir.path()).status.code(), Some(2));
    let o = bin(&["verify", "thm-squared-hinge", "--out", "v"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let reports: Vec<Value> = serde_json::from_str(&fs::read_to_string(dir.path().join("v/verify.json")).unwrap()).unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r["holds"] == true));
}

#[test]
fn verify_all_covers_every_suite() {
    let dir = setup();
    let o = bin(&["verify", "all", "--quick", "--out", "v"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let reports: Vec<Value> = serde_json::from_str(&fs::read_to_string(dir.path().join("v/verify.json")).unwrap()).unwrap();
    for suite in aws_sgd::theory::SUITES {
        assert!(reports.iter().any(|r| r["suite"] == *suite), "no report from {suite}");
    }
}

#[test]
fn report_is_prefix_mean_of_the_loss_column() {
    let dir = setup();
    for (out, seed) in [("one", "1"), ("two", "2")] {
        assert!(bin(&["run", "--config", "cfg.json", "--seed", seed, "--out", out], dir.path()).status.success());
    }
    let o = bin(&["report", "one", "two", "--out", "report.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let mut rdr = csv::Reader::from_path(dir.path().join("one/metrics.csv")).unwrap();
    let losses: Vec<f64> = rdr.records().map(|r| r.unwrap()[6].parse().unwrap()).collect();
    let mut rdr = csv::Reader::from_path(dir.path().join("report.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["method", "t", "avg_progressive_loss", "cumulative_samples"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 800);
    let one: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[0] == "one").collect();
    assert_eq!(one.len(), 400);
    let mut sum = 0.0;
    for (i, r) in one.iter().enumerate() {
        sum += losses[i];
        let avg: f64 = r[2].parse().unwrap();
        assert!((avg - sum / (i + 1) as f64).abs() <= 1e-9 * (1.0 + avg.abs()), "row {i}");
    }
    assert!(rows.iter().any(|r| &r[0] == "two"));

    assert_eq!(bin(&["report", "one", "absent"], dir.path()).status.code(), Some(2));
}

#[test]
fn calibrate_beta_and_sweep_write_configs() {
    let dir = setup();
    let o = bin(&["calibrate-beta", "--config", "cfg.json", "--target-rate", "0.3", "--out", "cal"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let cal: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cal/calibration.json")).unwrap()).unwrap();
    assert!((cal["achieved_rate"].as_f64().unwrap() - 0.3).abs() <= 0.01);
    let o = bin(&["run", "--config", "cal/config.json", "--out", "r"], dir.path());
    assert!(o.status.success());
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sampling_rate"], cal["achieved_rate"]);

    let o = bin(
        &["sweep", "--config", "cfg.json", "--param", "step_policy.rho=0.1:10:log", "--budget", "3", "--out", "sw"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("sw/best_config.json").is_file());
    let sweep: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sw/sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["leaderboard"].as_array().unwrap().len(), 3);

    let o = bin(&["sweep", "--config", "cfg.json", "--param", "step_policy.rho=1", "--out", "sw"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_data_round_trips_through_run() {
    let dir = setup();
    let spec = r#"{"source": "margin", "n": 120, "d": 4, "rho_star": 0.2, "r": 1.0, "seed": 0}"#;
    fs::write(dir.path().join("data.json"), spec).unwrap();
    let o = bin(&["gen-data", "--config", "data.json", "--seed", "5", "--out", "g"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("g/data.libsvm")).unwrap();
    assert_eq!(text.lines().count(), 120);
    assert!(bin(&["gen-data", "--config", "data.json", "--seed", "5", "--out", "h"], dir.path()).status.success());
    assert_eq!(text, fs::read_to_string(dir.path().join("h/data.libsvm")).unwrap());

    let o = bin(
        &["run", "--config", "cfg.json", "--out", "r", "--set", r#"dataset={"source":"libsvm","path":"g/data.libsvm"}"#],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("r/metrics.csv")).unwrap().lines().count(), 121);
}
