//! End-to-end tests of the `sapda` binary: flag resolution, run directory
//! layout and cross-process determinism. Training settings are kept tiny;
//! the statistical behaviour of full runs is covered elsewhere.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = "\
seeds = 0
task.samples_per_class = 8
train.total_iterations = 4
train.update_interval = 4
train.batch_size = 8
";

fn sapda() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sapda"));
    for (key, _) in std::env::vars_os() {
        if key.to_string_lossy().starts_with("SAPDA_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sapda-cli-{tag}-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.conf");
    fs::write(&path, body).unwrap();
    path
}

fn only_dir(out: &Path) -> PathBuf {
    let mut dirs: Vec<_> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(dirs.len(), 1, "expected exactly one run dir in {}", out.display());
    dirs.pop().unwrap()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn summary(run_dir: &Path) -> Value {
    let body = fs::read_to_string(run_dir.join("summary.json")).unwrap();
    serde_json::from_str(&body).unwrap()
}

#[test]
fn run_writes_the_documented_tree() {
    let dir = temp_dir("tree");
    let config = write_config(&dir, TINY);
    let out = dir.join("out");
    let output = sapda().args(["run", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("wrote "), "{stdout}");
    assert!(stdout.contains("sapda: mean accuracy"), "{stdout}");

    let run_dir = only_dir(&out);
    assert!(run_dir.join("manifest.txt").is_file());
    assert!(run_dir.join("summary.json").is_file());
    assert!(run_dir.join("sapda/weights_final.json").is_file());
    let history = fs::read_to_string(run_dir.join("sapda/seed-0/history.csv")).unwrap();
    let mut lines = history.lines();
    assert!(lines.next().unwrap().starts_with("iteration,classifier_loss"));
    assert_eq!(lines.count(), 1);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn flags_beat_environment_beats_file() {
    let dir = temp_dir("precedence");
    let config = write_config(&dir, &format!("{TINY}train.beta = 0.5\n"));

    let out_env = dir.join("env");
    let output = sapda()
        .env("SAPDA_TRAIN_BETA", "0.25")
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_env)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let manifest = fs::read_to_string(only_dir(&out_env).join("manifest.txt")).unwrap();
    assert!(manifest.contains("train.beta = 0.25"), "{manifest}");

    let out_flag = dir.join("flag");
    let output = sapda()
        .env("SAPDA_TRAIN_BETA", "0.25")
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_flag)
        .args(["--beta", "0.1"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let manifest = fs::read_to_string(only_dir(&out_flag).join("manifest.txt")).unwrap();
    assert!(manifest.contains("train.beta = 0.1"), "{manifest}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn seed_and_schedule_flags_reshape_the_run() {
    let dir = temp_dir("flags");
    let config = write_config(&dir, TINY);
    let out = dir.join("out");
    let output = sapda()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "9", "--iters", "8", "--interval", "4", "--mode", "source-only"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let run_dir = only_dir(&out);
    let manifest = fs::read_to_string(run_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seeds = 9"), "{manifest}");
    assert!(manifest.contains("train.total_iterations = 8"), "{manifest}");
    assert!(manifest.contains("train.mode = source-only"), "{manifest}");
    let history = fs::read_to_string(run_dir.join("source-only/seed-9/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_config_key_fails_and_lists_the_keys() {
    let dir = temp_dir("unknown");
    let config = write_config(&dir, "train.betas = 1\n");
    let output = sapda().args(["run", "--config"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    let stderr = stderr_of(&output);
    assert!(stderr.contains("unknown key"), "{stderr}");
    assert!(stderr.contains("train.beta"), "{stderr}");
    assert!(stderr.contains("run.conf:1"), "{stderr}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_config_file_names_the_path() {
    let output = sapda().args(["run", "--config", "/nonexistent/sapda.conf"]).output().unwrap();
    assert!(!output.status.success());
    let stderr = stderr_of(&output);
    assert!(stderr.contains("/nonexistent/sapda.conf"), "{stderr}");
    assert!(stderr.contains("not found"), "{stderr}");
}

#[test]
fn ablate_covers_every_mode() {
    let dir = temp_dir("ablate");
    let config = write_config(&dir, TINY);
    let out = dir.join("out");
    let output = sapda().args(["ablate", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let run_dir = only_dir(&out);
    let parsed = summary(&run_dir);
    let conditions = parsed["conditions"].as_array().unwrap();
    assert_eq!(conditions.len(), 7);
    for name in ["sapda", "sapda-hard2", "sapda-soft3", "unweighted-adversarial", "source-only", "no-cluster-head", "no-weight-eval"] {
        assert!(conditions.iter().any(|c| c["name"] == name), "{name} missing");
        assert!(run_dir.join(name).join("weights_final.json").is_file(), "{name} dir missing");
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn beta_sweep_runs_the_full_default_list() {
    let dir = temp_dir("betas");
    let config = write_config(&dir, TINY);
    let out = dir.join("out");
    let output = sapda().args(["sweep-beta", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let parsed = summary(&only_dir(&out));
    let names: Vec<&str> =
        parsed["conditions"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["beta-0.01", "beta-0.02", "beta-0.05", "beta-0.1", "beta-0.5", "beta-1"]);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn class_sweep_varies_the_target_count() {
    let dir = temp_dir("classes");
    let config = write_config(&dir, TINY);
    let out = dir.join("out");
    let output = sapda().args(["sweep-classes", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let run_dir = only_dir(&out);
    let parsed = summary(&run_dir);
    let names: Vec<&str> =
        parsed["conditions"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["classes-2", "classes-4", "classes-6", "classes-8"]);
    let history = fs::read_to_string(run_dir.join("classes-2/seed-0/history.csv")).unwrap();
    assert!(history.lines().next().unwrap().ends_with("w_7"), "8 source classes expected");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn identical_invocations_write_identical_results() {
    let dir = temp_dir("determinism");
    let config = write_config(&dir, &format!("{TINY}train.total_iterations = 8\n"));
    let mut bodies = Vec::new();
    for tag in ["a", "b"] {
        let out = dir.join(tag);
        let output = sapda().args(["run", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
        assert!(output.status.success(), "{}", stderr_of(&output));
        let run_dir = only_dir(&out);
        bodies.push((
            fs::read(run_dir.join("summary.json")).unwrap(),
            fs::read(run_dir.join("sapda/weights_final.json")).unwrap(),
            fs::read(run_dir.join("sapda/seed-0/history.csv")).unwrap(),
        ));
    }
    assert_eq!(bodies[0], bodies[1]);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn check_subcommand_reports_every_invariant() {
    let output = sapda().args(["check", "--seed", "3"]).output().unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "{stdout}\n{}", stderr_of(&output));
    assert!(!stdout.contains("FAIL"), "{stdout}");
    for name in ["partition-oracle", "gradient-oracle", "weight-table-image"] {
        assert!(stdout.contains(&format!("ok {name}")), "{stdout}");
    }
    assert!(stdout.contains("all 11 checks passed"), "{stdout}");
}
