//! End-to-end checks of the binary: exit codes, seed overrides, artifact
//! round trips.

use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_mlda")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mlda_cli_{}_{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn smoke_config(dir: &Path, reference: Option<f64>) -> PathBuf {
    let reference = match reference {
        Some(r) => r.to_string(),
        None => "null".into(),
    };
    let text = format!(
        r#"{{
  "problem": {{
    "type": "gaussian", "dim": 2, "noise_sd": 0.5,
    "truth": {{ "values": [0.6, -0.3] }}, "noise_seed": 11
  }},
  "hierarchy": {{ "resolutions": [0.9, 1.0] }},
  "proposals": {{ "coarsest": {{ "type": "random_walk", "scale": 0.6 }} }},
  "sampler": {{
    "draws": 300, "burn_in": 50, "subchain_lengths": [3],
    "subchain_mode": "uniform", "seed": 5, "estimator_mode": true,
    "chains": 2, "initial": "prior_mean"
  }},
  "estimator": {{ "qoi": "state_0", "reference": {reference} }},
  "aem": {{ "enabled": false }},
  "output": {{ "acf_max_lag": 40, "acf_components": 2 }}
}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = temp_dir("invalid");
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{ "problem": { "type": "gaussian" } }"#).unwrap();
    let status = Command::new(binary())
        .args(["run", path.to_str().unwrap(), "--output-dir", dir.join("out").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn missing_config_exits_with_validation_code() {
    let status = Command::new(binary()).args(["run", "/nonexistent/config.json"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn run_writes_artifacts_and_error_trace() {
    let dir = temp_dir("artifacts");
    let config = smoke_config(&dir, Some(0.4));
    let out = dir.join("out");
    let status = Command::new(binary())
        .args(["run", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for name in [
        "effective_config.json",
        "metadata.json",
        "diagnostics.json",
        "timings.json",
        "estimate.json",
        "error_trace.csv",
        "acf.csv",
        "chain0_level0.csv",
        "chain1_level1.csv",
        "qoi_chain0_level0.csv",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let trace = std::fs::read_to_string(out.join("error_trace.csv")).unwrap();
    assert!(trace.starts_with("chain,iteration,multilevel_abs_error,standard_abs_error"));
    // One row per chain per iteration plus the header.
    assert_eq!(trace.lines().count(), 1 + 2 * 300);
}

#[test]
fn seed_flag_overrides_environment_which_overrides_config() {
    let dir = temp_dir("seeds");
    let config = smoke_config(&dir, None);

    let run = |tag: &str, seed_flag: Option<&str>, env_seed: Option<&str>| -> Vec<u8> {
        let out = dir.join(tag);
        let mut cmd = Command::new(binary());
        cmd.args(["run", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
        if let Some(seed) = seed_flag {
            cmd.args(["--seed", seed]);
        }
        match env_seed {
            Some(seed) => cmd.env("MLDA_SEED", seed),
            None => cmd.env_remove("MLDA_SEED"),
        };
        assert!(cmd.status().unwrap().success());
        std::fs::read(out.join("chain0_level1.csv")).unwrap()
    };

    let from_config = run("a", None, None);
    let from_env = run("b", None, Some("77"));
    let from_env_again = run("c", None, Some("77"));
    let from_flag = run("d", Some("77"), Some("5555"));

    assert_ne!(from_config, from_env, "environment seed must take effect");
    assert_eq!(from_env, from_env_again, "same seed, same bytes");
    assert_eq!(from_flag, from_env, "--seed 77 must match MLDA_SEED=77");
}

#[test]
fn diagnose_and_estimate_recompute_from_artifacts() {
    let dir = temp_dir("reports");
    let config = smoke_config(&dir, None);
    let out = dir.join("out");
    assert!(Command::new(binary())
        .args(["run", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()])
        .status()
        .unwrap()
        .success());

    let diagnose = Command::new(binary()).args(["diagnose", out.to_str().unwrap()]).output().unwrap();
    assert!(diagnose.status.success());
    let report: serde_json::Value = serde_json::from_slice(&diagnose.stdout).unwrap();
    // Recomputed diagnostics match the ones written by the run.
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(report["ess"], stored["ess"]);
    assert_eq!(report["acceptance_rates"], stored["acceptance_rates"]);

    let estimate = Command::new(binary()).args(["estimate", out.to_str().unwrap()]).output().unwrap();
    assert!(estimate.status.success());
    let report: serde_json::Value = serde_json::from_slice(&estimate.stdout).unwrap();
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(report["pooled_multilevel"], stored["pooled_multilevel"]);
    assert_eq!(report["pooled_standard"], stored["pooled_standard"]);
}

#[test]
fn estimate_without_estimator_mode_is_a_runtime_error() {
    let dir = temp_dir("no_streams");
    let config = smoke_config(&dir, None);
    // Disable estimator mode.
    let text = std::fs::read_to_string(&config).unwrap().replace(
        "\"estimator_mode\": true",
        "\"estimator_mode\": false",
    );
    std::fs::write(&config, text).unwrap();
    let out = dir.join("out");
    assert!(Command::new(binary())
        .args(["run", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()])
        .status()
        .unwrap()
        .success());
    let status = Command::new(binary()).args(["estimate", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn diagnose_on_empty_directory_is_a_runtime_error() {
    let dir = temp_dir("empty");
    let status = Command::new(binary()).args(["diagnose", dir.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}
