use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
schema = 1
seed = 4
rounds = 3

[scenario]
kind = "same_dist_same_size"
n = 4
per_class_pool = 40

[[estimators]]
name = "gtg"

[[estimators]]
name = "mr"

[[estimators]]
name = "tmr"

[[estimators]]
name = "tmc"
"#;

fn gtg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtg"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GTG_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), config).unwrap();
    dir
}

fn simulate(dir: &Path) -> String {
    let o = gtg(&["simulate", "--config", "exp.toml", "--out", "out"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    "out/same_dist_same_size-n4-s4.gtgl".into()
}

#[test]
fn simulate_writes_log_and_sidecar() {
    let dir = setup(SMALL);
    let o = gtg(&["simulate", "--config", "exp.toml", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.contains("same_dist_same_size-n4-s4.gtgl") && line.contains("final accuracy"), "{line}");
    let side: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/same_dist_same_size-n4-s4.gtgl.json")).unwrap())
            .unwrap();
    assert_eq!(side["master_seed"], 4);
    assert_eq!(side["config"]["rounds"], 3);
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = setup(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_gtg"))
        .args(["--quiet", "simulate", "--config", "exp.toml"])
        .current_dir(dir.path())
        .env("GTG_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    assert!(dir.path().join("from-env/same_dist_same_size-n4-s4.gtgl").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = setup("schema = 1\nseed = 1\nrounds = 0\n");
    let o = gtg(&["simulate", "--config", "exp.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rounds"), "{}", stderr(&o));

    fs::write(dir.path().join("typo.toml"), "schema = 1\nseed = 1\nrounds = 2\n\n[train]\nlearning_rat = 0.1\n").unwrap();
    let o = gtg(&["simulate", "--config", "typo.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 6") && err.contains("learning_rat"), "{err}");

    let o = gtg(&["simulate", "--config", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = gtg(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn print_config_round_trips() {
    let dir = setup(SMALL);
    let first = gtg(&["--print-config", "--seed", "9", "simulate", "--config", "exp.toml"], dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    fs::write(dir.path().join("echo.toml"), stdout(&first)).unwrap();
    let second = gtg(&["--print-config", "simulate", "--config", "echo.toml"], dir.path());
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("seed = 9"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn evaluate_reports_per_round_flags() {
    let dir = setup(SMALL);
    let log = simulate(dir.path());
    let o = gtg(&["evaluate", "--log", &log, "--estimator", "gtg"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("total") && text.contains("eval_count"), "{text}");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/same_dist_same_size-n4-s4.gtg.json")).unwrap())
            .unwrap();
    assert_eq!(report["converged_rounds"].as_array().unwrap().len(), 3);
    assert_eq!(report["total"]["values"].as_array().unwrap().len(), 4);
}

#[test]
fn evaluate_mr_counts_match_enumeration() {
    let dir = setup(SMALL);
    let log = simulate(dir.path());
    let o = gtg(&["evaluate", "--log", &log, "--estimator", "mr", "--out", "reports"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("eval_count\t48"), "{}", stdout(&o));
    assert!(dir.path().join("reports/same_dist_same_size-n4-s4.mr.json").exists());
}

#[test]
fn evaluate_accepts_parameter_files() {
    let dir = setup(SMALL);
    let log = simulate(dir.path());
    fs::write(dir.path().join("tmr.toml"), "lambda = 0.5\nround_threshold = 0.3\n").unwrap();
    let o = gtg(&["--print-config", "evaluate", "--log", &log, "--estimator", "tmr", "--params", "tmr.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("lambda = 0.5"), "{}", stdout(&o));

    fs::write(dir.path().join("bad.toml"), "lamda = 0.5\n").unwrap();
    let o = gtg(&["evaluate", "--log", &log, "--estimator", "tmr", "--params", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_rejects_unknown_estimators_and_corrupt_logs() {
    let dir = setup(SMALL);
    let log = simulate(dir.path());
    let o = gtg(&["evaluate", "--log", &log, "--estimator", "banzhaf"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("gtg_oti") && err.contains("original"), "{err}");

    let path = dir.path().join(&log);
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    fs::write(&path, bytes).unwrap();
    let o = gtg(&["evaluate", "--log", &log, "--estimator", "gtg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn compare_writes_one_row_per_estimator() {
    let dir = setup(SMALL);
    let o = gtg(&["compare", "--config", "exp.toml", "--out", "cmp"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("cmp/same_dist_same_size-n4-s4.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], gtg_core::metrics::CSV_HEADER);
    for line in &lines[1..] {
        for field in line.split(',').skip(1) {
            assert!(field.parse::<f64>().unwrap().is_finite(), "{line}");
        }
    }
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cmp/same_dist_same_size-n4-s4.json")).unwrap())
            .unwrap();
    assert_eq!(doc["metadata"]["reference"], "original");
    assert_eq!(doc["estimates"].as_array().unwrap().len(), 5);
}

#[test]
fn compare_fails_fast_on_capacity() {
    let dir = setup("schema = 1\nseed = 1\nrounds = 50\n\n[scenario]\nn = 15\nper_class_pool = 3000\n\n[[estimators]]\nname = \"gtg\"\n");
    let start = std::time::Instant::now();
    let o = gtg(&["compare", "--config", "exp.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("capacity"), "{}", stderr(&o));
    assert!(start.elapsed().as_secs() < 5);
    assert!(!dir.path().join("gtg-out").exists());
}

#[test]
fn report_merges_and_checks_schema() {
    let dir = setup(SMALL);
    let o = gtg(&["--quiet", "compare", "--config", "exp.toml", "--out", "a"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = gtg(&["--quiet", "--seed", "5", "compare", "--config", "exp.toml", "--out", "b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let a = "a/same_dist_same_size-n4-s4.json";
    let b = "b/same_dist_same_size-n4-s5.json";

    let single = gtg(&["report", a], dir.path());
    assert!(single.status.success());
    assert_eq!(stdout(&single).lines().count(), 1 + 4);

    let merged = gtg(&["report", b, a], dir.path());
    let text = stdout(&merged);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[0].starts_with("same_dist_same_size-n4-s4") && rows[7].starts_with("same_dist_same_size-n4-s5"));

    let mut doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(b)).unwrap()).unwrap();
    doc["schema_version"] = Value::from(2);
    fs::write(dir.path().join("future.json"), doc.to_string()).unwrap();
    let o = gtg(&["report", a, "future.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains('2') && err.contains('1'), "{err}");
}
