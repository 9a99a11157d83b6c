//! End-to-end checks of the experiment harness and its command line.

use std::fs;
use std::process::Command;

use hinted_lqr::harness::run::{fit_directory, run_experiment, RunOptions};
use hinted_lqr::harness::{ExperimentConfig, HarnessError};

const CONTROLLER_SOURCES: [(&str, &str); 3] = [
    ("mod.rs", include_str!("../src/controllers/mod.rs")),
    ("adaptive.rs", include_str!("../src/controllers/adaptive.rs")),
    ("params.rs", include_str!("../src/controllers/params.rs")),
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hinted-lqr"))
}

fn small_config(alg: &str) -> String {
    format!(
        r#"{{"plant": {{"preset": "scalar-appendixB"}}, "algorithm": "{alg}",
            "horizons": [400, 800, 1600, 3200], "seeds": {{"count": 10, "base": 11}}}}"#
    )
}

#[test]
fn controllers_never_see_the_true_system() {
    for (name, src) in CONTROLLER_SOURCES {
        assert!(!src.contains("SystemTruth"), "controllers/{name} mentions SystemTruth");
        assert!(!src.contains("crate::control::SystemTruth"), "controllers/{name} imports SystemTruth");
    }
}

#[test]
fn rerun_reproduces_summary_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("alg1");
    let path = dir.path().join("cfg.json");
    fs::write(&path, &cfg).unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let status = bin()
            .args(["run", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .args(["--workers", workers])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn all_algorithms_run_on_the_scalar_plant() {
    for alg in ["alg1", "alg2", "scalarB", "known-b", "baseline-optimal", "baseline-static", "baseline-no-hint"] {
        let cfg = ExperimentConfig::from_json(&small_config(alg)).unwrap();
        let out = run_experiment(cfg, &RunOptions::default()).unwrap();
        assert_eq!(out.records.len(), 40, "{alg}");
        assert!(out.records.iter().all(|r| r.regret.is_finite()), "{alg}");
    }
}

#[test]
fn fit_reads_back_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(&small_config("baseline-static")).unwrap();
    let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), ..RunOptions::default() };
    let out = run_experiment(cfg, &opts).unwrap();
    let refit = fit_directory(dir.path()).unwrap();
    let fit = out.summary.fit.unwrap();
    assert!((refit.alpha - fit.alpha).abs() < 1e-9);
    let cli = bin().args(["fit", "--in"]).arg(dir.path()).output().unwrap();
    assert!(cli.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&cli.stdout).unwrap();
    assert!(parsed["alpha"].is_number());
}

#[test]
fn trajectory_dump_writes_one_file_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"plant": {"preset": "stable-easy"}, "algorithm": "alg1", "horizons": [300], "seeds": {"count": 2, "base": 0}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bin().args(["run", "--traj-dump", "--config"]).arg(&path).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out.join("traj/T300_s1.csv")).unwrap();
    assert!(text.starts_with("t,x0,x1,u0,w0,w1,cost,phase\n"));
    assert_eq!(text.lines().count(), 301);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"plant": {"preset": "nope"}, "algorithm": "alg1", "horizons": [100], "seeds": {"count": 1}}"#).unwrap();
    let code = bin().args(["run", "--config"]).arg(&bad).status().unwrap().code();
    assert_eq!(code, Some(2));

    let unsorted = dir.path().join("unsorted.json");
    fs::write(&unsorted, r#"{"plant": {"preset": "stable-easy"}, "algorithm": "alg1", "horizons": [400, 200], "seeds": {"count": 1}}"#).unwrap();
    let code = bin().args(["run", "--config"]).arg(&unsorted).status().unwrap().code();
    assert_eq!(code, Some(2));

    let few = dir.path().join("few.json");
    fs::write(&few, r#"{"plant": {"preset": "stable-easy"}, "algorithm": "baseline-static", "horizons": [100, 200], "seeds": {"count": 2}}"#).unwrap();
    let out = dir.path().join("few_out");
    assert!(bin().args(["run", "--config"]).arg(&few).arg("--out").arg(&out).status().unwrap().success());
    let code = bin().args(["fit", "--in"]).arg(&out).status().unwrap().code();
    assert_eq!(code, Some(3));
}

#[test]
fn seed_environment_variable_overrides_base() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"plant": {"preset": "stable-easy"}, "algorithm": "baseline-static", "horizons": [200], "seeds": {"count": 1, "base": 1}}"#).unwrap();
    let run = |seed: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut cmd = bin();
        cmd.args(["run", "--config"]).arg(&path).arg("--out").arg(&out);
        match seed {
            Some(s) => cmd.env("HINTED_LQR_SEED", s),
            None => cmd.env_remove("HINTED_LQR_SEED"),
        };
        assert!(cmd.status().unwrap().success());
        fs::read_to_string(out.join("records.csv")).unwrap()
    };
    let base = run(None, "a");
    assert_eq!(run(Some("1"), "b"), base);
    assert_ne!(run(Some("2"), "c"), base);
}

#[test]
fn calibrate_reports_constants() {
    let out = bin().args(["calibrate", "--preset", "scalar-appendixB", "--samples", "20"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["c0"].as_f64().unwrap() > 0.0);
    let code = bin().args(["calibrate", "--preset", "nope"]).status().unwrap().code();
    assert_eq!(code, Some(2));
}

#[test]
fn errors_map_to_exit_codes() {
    assert_eq!(HarnessError::Config(String::new()).exit_code(), 2);
    assert_eq!(HarnessError::InsufficientData(String::new()).exit_code(), 3);
}
