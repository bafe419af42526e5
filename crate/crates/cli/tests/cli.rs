use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use teffect_core::sim::generate_dgp;

fn teffect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teffect")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_dgp_csv(path: &Path, n: usize, seed: u64) {
    let draw = generate_dgp(n, 5, seed).unwrap();
    let smp = &draw.sample;
    let mut text = String::from("Y,D,X1,X2,X3,X4,X5\n");
    for i in 0..smp.n() {
        let x: Vec<String> = smp.x(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(text, "{},{},{}", smp.outcomes()[i], smp.treatments()[i], x.join(","));
    }
    std::fs::write(path, text).unwrap();
}

const NET: &str = r#"{"widths": [8], "activation": "relu", "weight_bound": "unbounded",
                      "learning_rate": 0.05, "batch_size": 32, "epochs": 15, "seed": 0}"#;

fn smoke_config(dir: &Path, estimators: &str) -> PathBuf {
    let path = dir.join("sim.json");
    let text = format!(
        r#"{{"seed": 11, "networks": {{"propensity": {NET}, "influence": {NET}}},
            "simulation": {{"n": 200, "p": 5, "replications": 2, "estimands": ["ATE", "QTE(0.5)"],
                            "estimators": {estimators}, "truth_draws": 20000}}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_smoke_run_writes_reports_and_repeats_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), r#"["ANN-IPW", "GLM-IPW", "Oracle"]"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = teffect(&["simulate", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let csv_a = std::fs::read(a.join("report.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("report.csv")).unwrap());

    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["replications"].as_array().unwrap().len(), 2);
    assert!(json["runtime_secs"].as_f64().unwrap() > 0.0);
    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(4) == Some("2")), "{text}");
}

#[test]
fn unknown_estimator_is_a_config_error_listing_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), r#"["ANN-IPW", "KNN-IPW"]"#);
    let o = teffect(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    for name in ["ANN-IPW", "ANN-OR", "GLM-IPW", "GLM-OR", "Oracle"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn report_reproduces_simulate_output_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), r#"["ANN-IPW", "Oracle"]"#);
    let sim = dir.path().join("sim");
    assert_eq!(code(&teffect(&["simulate", "--config", s(&cfg), "--out", s(&sim)])), 0);
    let merged = dir.path().join("merged.csv");
    let o = teffect(&["report", s(&sim.join("report.csv")), "--out", s(&merged)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&merged).unwrap(), std::fs::read(sim.join("report.csv")).unwrap());
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("ANN n=200") && table.contains("Oracle n=200"), "{table}");
}

#[test]
fn report_rejects_conflicting_truths_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let header = "estimand,estimator,n,p,R,rate,bias,emp_sd,est_sd,truth,failures\n";
    std::fs::write(&a, format!("{header}ATE,ANN-IPW,2000,5,100,0.93,0.05,0.06,0.06,2,0\n")).unwrap();
    std::fs::write(&b, format!("{header}ATE,GLM-IPW,2000,5,100,0.1,0.2,0.07,0.07,2.5,0\n")).unwrap();
    let o = teffect(&["report", s(&a), s(&b)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("schema mismatch"), "{}", stderr(&o));
    let o = teffect(&["report"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("usage"), "{}", stderr(&o));
}

#[test]
fn single_arm_file_fails_validation_before_fitting() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    let mut text = String::from("Y,D,X1\n");
    for i in 0..50 {
        let _ = writeln!(text, "{i},0,{}", i % 3);
    }
    std::fs::write(&data, text).unwrap();
    let o = teffect(&["estimate", "--data", s(&data)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("only one treatment level"), "{}", stderr(&o));
}

#[test]
fn missing_level_and_bad_cells_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("gap.csv");
    let mut text = String::from("Y,D,SBP\n");
    for i in 0..80 {
        let _ = writeln!(text, "{i},{},{}", if i % 2 == 0 { 0 } else { 2 }, 120 + i % 9);
    }
    std::fs::write(&data, &text).unwrap();
    let o = teffect(&["estimate", "--data", s(&data)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("treatment level 1 never occurs"), "{}", stderr(&o));

    let bad = text.replacen("4,0,124", "4,0,high", 1);
    std::fs::write(&data, bad).unwrap();
    let o = teffect(&["estimate", "--data", s(&data)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("row 5, column SBP"), "{}", stderr(&o));
}

#[test]
fn bad_thread_setting_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_teffect"))
        .args(["report", "x.csv"])
        .env("TEFFECT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("TEFFECT_THREADS"));
}

#[test]
fn estimate_on_synthetic_data_covers_the_true_effect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("dgp.csv");
    write_dgp_csv(&data, 2000, 77);
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 5, "estimands": ["ATE"], "estimator": "both",
            "grid": {"widths": [[8], [32]], "learning_rates": [0.05], "batch_sizes": [32], "epochs": [100]}}"#,
    )
    .unwrap();
    let out = dir.path().join("res.json");
    let curves = dir.path().join("curves.csv");
    let o = teffect(&[
        "estimate", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--emit-curves", s(&curves),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let results = doc["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    for r in results {
        let est = r["estimate"].as_f64().unwrap();
        let sd = r["est_sd"].as_f64().unwrap();
        assert!((est - 2.0).abs() <= 3.0 * sd, "{}: {est} +- {sd}", r["estimator"]);
        let z = r["z_value"].as_f64().unwrap();
        assert_eq!(z, est / sd);
    }
    assert_eq!(doc["config"]["seed"], 5);
    assert!(doc["selected"]["propensity"][0]["cv_loss"].as_f64().is_some());

    let text = std::fs::read_to_string(&curves).unwrap();
    assert!(text.starts_with("x,g_0,g_1\n"));
    assert_eq!(text.lines().count(), 102);

    let csv_out = dir.path().join("res.csv");
    let o = teffect(&["estimate", "--config", s(&cfg), "--data", s(&data), "--out", s(&csv_out), "--estimator", "ipw"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv_out).unwrap();
    assert!(text.starts_with("estimand,estimator,estimate,est_sd,z_value,p_value,ci_lower,ci_upper,alpha,trimmed\n"));
    assert!(dir.path().join("res.config.json").exists());
}
