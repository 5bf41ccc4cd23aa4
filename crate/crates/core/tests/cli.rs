use std::path::Path;
use std::process::{Command, Output};

use ris_pass::harness::StrategyReport;

const TINY: &str = r#"{"system": {"n_waveguides": 2, "n_pas": 1, "n_ris": 2, "n_users": 1}, "dataset": {"seed": 4, "count": 30}}"#;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-pass"))
        .args(args)
        .arg("--results-dir")
        .arg(dir)
        .env_remove("RIS_PASS_RESULTS")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_data_depends_only_on_the_seed() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let a = p.join("a.json");
    let b = p.join("b.json");
    let c = p.join("c.json");
    ok(&bin(p, &["gen-data", "--seed", "3", "--count", "5", "--out", a.to_str().unwrap()]));
    ok(&bin(p, &["gen-data", "--seed", "3", "--count", "5", "--out", b.to_str().unwrap()]));
    ok(&bin(p, &["gen-data", "--seed", "4", "--count", "5", "--out", c.to_str().unwrap()]));
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn configuration_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.json");
    std::fs::write(&cfg, r#"{"system": {"preset": "desk", "waveguides": 3}}"#).unwrap();
    let out = bin(d.path(), &["gen-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"));

    let out = bin(d.path(), &["train", "--epochs", "1", "--lr", "-1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = bin(d.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let out = bin(p, &["eval", "--strategy", "I"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs a trained model"));

    // A full grid over the default system is far beyond the evaluation cap.
    let out = bin(p, &["oracle", "--limit", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("evaluations"));
}

#[test]
fn eval_writes_a_per_sample_report() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let cfg = tiny_config(p);
    ok(&bin(p, &["eval", "--config", &cfg, "--strategy", "random", "--limit", "7"]));
    let text = std::fs::read_to_string(p.join("report.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "sample_id,SR,EE,time_ms,feasible");
    let rows = StrategyReport::read_csv(&p.join("report.csv")).unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.feasible && r.sr > 0.0));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["method"], "random");
    assert_eq!(summary["all_feasible"], true);

    ok(&bin(p, &["bench", "--config", &cfg, "--strategy", "refine-only", "--limit", "3", "--budget", "20"]));
    let bench: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("bench.json")).unwrap()).unwrap();
    assert_eq!(bench["samples"], 3);
    assert!(bench["median_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn train_then_evaluate_every_strategy() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let cfg = tiny_config(p);
    ok(&bin(p, &["gen-data", "--config", &cfg]));
    let data = p.join("dataset.json");
    let data = data.to_str().unwrap();
    ok(&bin(p, &["train", "--config", &cfg, "--data", data, "--epochs", "2", "--hidden", "8", "--seed", "1"]));
    for name in ["model.json", "history.csv", "train.json"] {
        assert!(p.join(name).exists(), "{name} missing");
    }
    let history = std::fs::read_to_string(p.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let model = p.join("model.json");
    let model = model.to_str().unwrap();
    for strategy in ["I", "II"] {
        ok(&bin(p, &["eval", "--data", data, "--model", model, "--strategy", strategy, "--budget", "20", "--test-split"]));
        let rows = StrategyReport::read_csv(&p.join("report.csv")).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.feasible));
    }
    // Strategy III needs a network without a beam stage.
    let out = bin(p, &["eval", "--data", data, "--model", model, "--strategy", "III"]);
    assert_eq!(out.status.code(), Some(1));

    let two = p.join("two-stage.json");
    ok(&bin(p, &["train", "--config", &cfg, "--data", data, "--epochs", "1", "--hidden", "8", "--beams", "rzf", "--out", two.to_str().unwrap()]));
    ok(&bin(p, &["eval", "--data", data, "--model", two.to_str().unwrap(), "--strategy", "III", "--budget", "20", "--limit", "4"]));

    // The desk dataset has different dimensions from the trained model.
    ok(&bin(p, &["gen-data", "--count", "3", "--out", p.join("desk.json").to_str().unwrap()]));
    let out = bin(p, &["eval", "--data", p.join("desk.json").to_str().unwrap(), "--model", model]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different system parameters"));
}

#[test]
fn oracle_writes_values_never_below_the_grid() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let cfg = tiny_config(p);
    ok(&bin(p, &["oracle", "--config", &cfg, "--limit", "3", "--positions", "11", "--phase-levels", "4"]));
    let mut r = csv::Reader::from_path(p.join("oracle.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["sample_id", "SR", "grid_SR", "evaluations"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let sr: f64 = row[1].parse().unwrap();
        let grid: f64 = row[2].parse().unwrap();
        assert!(sr >= grid);
        assert_eq!(&row[3], (11u64 * 11 * 16).to_string());
    }
}

#[test]
fn results_directory_comes_from_the_environment() {
    let d = tempfile::tempdir().unwrap();
    let target = d.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_ris-pass"))
        .args(["gen-data", "--count", "2"])
        .env("RIS_PASS_RESULTS", &target)
        .output()
        .unwrap();
    ok(&out);
    assert!(target.join("dataset.json").exists());
}

#[test]
fn in_process_entry_point_matches_the_binary() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("in-process.json");
    let code = ris_pass::harness::cli::run(["ris-pass", "gen-data", "--seed", "3", "--count", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let reference = d.path().join("binary.json");
    ok(&bin(d.path(), &["gen-data", "--seed", "3", "--count", "5", "--out", reference.to_str().unwrap()]));
    assert_eq!(std::fs::read(out).unwrap(), std::fs::read(reference).unwrap());
}
