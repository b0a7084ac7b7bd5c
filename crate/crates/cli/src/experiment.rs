//! Runs an experiment manifest and lays out the results on disk.
//!
//! ```text
//! <out>/<kind>-<unix-secs>-<hash8>/
//!   manifest.txt                    resolved config, written before training
//!   summary.json                    per-condition accuracy mean and std
//!   <condition>/weights_final.json  final weight state per seed
//!   <condition>/seed-<s>/history.csv
//! ```
//!
//! The hash suffix is FNV-1a over the manifest text, so reruns of the same
//! config are easy to spot. Seed runs execute in parallel; every file is
//! written via a temp file and rename so a crash never leaves a partial file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use rayon::prelude::*;
use sapda::{generate_task, RunRecord, TrainOutcome};
use serde_json::{json, Value};

use crate::manifest::ExperimentManifest;

pub struct ConditionResult {
    pub name: String,
    pub seeds: Vec<u64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

pub struct RunReport {
    pub dir: PathBuf,
    pub conditions: Vec<ConditionResult>,
}

pub fn run(manifest: &ExperimentManifest) -> Result<RunReport> {
    manifest.validate()?;
    let text = manifest.to_text();
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .context("system clock is before the unix epoch")?
        .as_secs();
    let hash = format!("{:016x}", fnv1a64(&text));
    let dir = manifest.out.join(format!("{}-{stamp}-{}", manifest.kind.name(), &hash[..8]));
    fs::create_dir_all(&dir).with_context(|| format!("create {}", dir.display()))?;
    write_atomic(&dir.join("manifest.txt"), text.as_bytes())?;

    let conditions = manifest.conditions()?;
    let jobs: Vec<(usize, u64)> = (0..conditions.len())
        .flat_map(|c| manifest.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let outcomes: Vec<TrainOutcome> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let (name, task_spec, train_config) = &conditions[c];
            let mut spec = task_spec.clone();
            spec.seed = seed;
            let task = generate_task(&spec)?;
            let mut config = train_config.clone();
            config.seed = seed;
            sapda::train(&task, &config)
                .with_context(|| format!("condition {name}, seed {seed}"))
        })
        .collect::<Result<_>>()?;

    let mut report = Vec::with_capacity(conditions.len());
    let mut summary_rows = Vec::with_capacity(conditions.len());
    for (c, (name, task_spec, _)) in conditions.iter().enumerate() {
        let cond_dir = dir.join(name);
        let mut finals = Vec::with_capacity(manifest.seeds.len());
        let mut accuracies = Vec::with_capacity(manifest.seeds.len());
        for (s, &seed) in manifest.seeds.iter().enumerate() {
            let outcome = &outcomes[c * manifest.seeds.len() + s];
            let seed_dir = cond_dir.join(format!("seed-{seed}"));
            fs::create_dir_all(&seed_dir).with_context(|| format!("create {}", seed_dir.display()))?;
            let csv = history_csv(&outcome.history, task_spec.source_classes);
            write_atomic(&seed_dir.join("history.csv"), csv.as_bytes())?;
            let last = outcome.history.last().context("training produced no records")?;
            accuracies.push(sig9(last.accuracy));
            finals.push((seed, last));
        }
        write_json(&cond_dir.join("weights_final.json"), &weights_final_json(name, &finals))?;
        let (mean, std) = mean_std(&accuracies);
        summary_rows.push(json!({
            "name": name,
            "seeds": manifest.seeds,
            "mean_accuracy": json_float(mean),
            "std_accuracy": json_float(std),
        }));
        report.push(ConditionResult {
            name: name.clone(),
            seeds: manifest.seeds.clone(),
            mean_accuracy: mean,
            std_accuracy: std,
        });
    }

    let summary = json!({ "kind": manifest.kind.name(), "conditions": summary_rows });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunReport { dir, conditions: report })
}

/// One row per weight update, floats in full-precision scientific form.
/// `wc_*` are the measured class weights, `w_*` the weights in force.
pub fn history_csv(history: &[RunRecord], classes: usize) -> String {
    let mut out = String::from(
        "iteration,classifier_loss,domain_loss,cluster_loss,accuracy,k_star,ch2,ch3,clamp_events",
    );
    for c in 0..classes {
        out.push_str(&format!(",wc_{c}"));
    }
    for c in 0..classes {
        out.push_str(&format!(",w_{c}"));
    }
    out.push('\n');
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            fmt_e(r.classifier_loss),
            fmt_e(r.domain_loss),
            fmt_e(r.cluster_loss),
            fmt_e(r.accuracy),
            r.k_star,
            r.ch2.map(fmt_e).unwrap_or_default(),
            r.ch3.map(fmt_e).unwrap_or_default(),
            r.clamp_events,
        ));
        for v in r.class_weights.iter().chain(r.assigned_weights.iter()) {
            out.push(',');
            out.push_str(&fmt_e(*v));
        }
        out.push('\n');
    }
    out
}

fn weights_final_json(name: &str, finals: &[(u64, &RunRecord)]) -> Value {
    let seeds: Vec<Value> = finals
        .iter()
        .map(|(seed, rec)| {
            json!({
                "seed": seed,
                "k_star": rec.k_star,
                "ch2": json_opt(rec.ch2),
                "ch3": json_opt(rec.ch3),
                "wc": rec.class_weights.iter().map(|&v| json_float(v)).collect::<Vec<_>>(),
                "weights": rec.assigned_weights.iter().map(|&v| json_float(v)).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "condition": name, "seeds": seeds })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value).context("serialise json")?;
    body.push('\n');
    write_atomic(path, body.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().with_context(|| format!("{} has no parent", path.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).with_context(|| format!("write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("rename into {}", path.display()))?;
    Ok(())
}

fn fnv1a64(text: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn fmt_e(v: f64) -> String {
    format!("{v:.8e}")
}

/// Round to nine significant digits through the decimal form, so a value in
/// a JSON file equals the reparsed CSV field exactly.
fn sig9(v: f64) -> f64 {
    fmt_e(v).parse().expect("scientific form reparses")
}

fn json_float(v: f64) -> Value {
    if v.is_finite() {
        serde_json::Number::from_f64(sig9(v)).map(Value::Number).expect("finite float")
    } else if v > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

fn json_opt(v: Option<f64>) -> Value {
    v.map(json_float).unwrap_or(Value::Null)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::ExperimentKind;

    #[test]
    fn fnv_matches_the_reference_values() {
        assert_eq!(fnv1a64(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64("a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn sig9_keeps_nine_digits_and_handles_infinity() {
        assert_eq!(sig9(0.123456789123), 0.123456789);
        assert_eq!(sig9(1.0), 1.0);
        assert_eq!(json_float(f64::INFINITY), Value::String("inf".into()));
        assert_eq!(json_opt(None), Value::Null);
    }

    #[test]
    fn history_rows_print_every_column() {
        let rec = RunRecord {
            iteration: 250,
            classifier_loss: 1.5,
            domain_loss: -0.25,
            cluster_loss: 0.0,
            accuracy: 0.75,
            k_star: 3,
            ch2: Some(f64::INFINITY),
            ch3: None,
            class_weights: vec![1.0, 0.5],
            assigned_weights: vec![1.0, 0.0],
            clamp_events: 7,
        };
        let csv = history_csv(&[rec], 2);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,classifier_loss,domain_loss,cluster_loss,accuracy,k_star,ch2,ch3,clamp_events,wc_0,wc_1,w_0,w_1"
        );
        assert_eq!(
            lines.next().unwrap(),
            "250,1.50000000e0,-2.50000000e-1,0.00000000e0,7.50000000e-1,3,inf,,7,1.00000000e0,5.00000000e-1,1.00000000e0,0.00000000e0"
        );
        assert!(lines.next().is_none());
    }

    #[test]
    fn std_of_a_single_value_is_zero() {
        assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
        let (mean, std) = mean_std(&[0.0, 1.0]);
        assert_eq!(mean, 0.5);
        assert!((std - (0.5f64.powi(2) * 2.0).sqrt()).abs() < 1e-15);
    }

    fn tiny_manifest(out: &Path) -> ExperimentManifest {
        let mut m = ExperimentManifest::default();
        m.out = out.to_path_buf();
        m.seeds = vec![0, 1];
        m.task.samples_per_class = 8;
        m.train.total_iterations = 8;
        m.train.update_interval = 4;
        m.train.batch_size = 8;
        m
    }

    #[test]
    fn run_lays_out_the_documented_tree_and_is_deterministic() {
        let base = std::env::temp_dir().join(format!("sapda-exp-{}", std::process::id()));
        let report = run(&tiny_manifest(&base.join("a"))).unwrap();
        assert_eq!(report.conditions.len(), 1);
        assert_eq!(report.conditions[0].name, "sapda");
        assert_eq!(report.conditions[0].seeds.len(), 2);
        assert!(report.dir.join("manifest.txt").is_file());
        assert!(report.dir.join("summary.json").is_file());
        assert!(report.dir.join("sapda/weights_final.json").is_file());
        let history = report.dir.join("sapda/seed-1/history.csv");
        assert!(history.is_file());

        let again = run(&tiny_manifest(&base.join("b"))).unwrap();
        for rel in ["summary.json", "sapda/weights_final.json", "sapda/seed-0/history.csv"] {
            let first = fs::read(report.dir.join(rel)).unwrap();
            let second = fs::read(again.dir.join(rel)).unwrap();
            assert_eq!(first, second, "{rel} differs between identical runs");
        }
        fs::remove_dir_all(&base).unwrap();
    }

    #[test]
    fn summary_is_recomputable_from_the_history_files() {
        let base = std::env::temp_dir().join(format!("sapda-sum-{}", std::process::id()));
        let report = run(&tiny_manifest(&base)).unwrap();
        let body = fs::read_to_string(report.dir.join("summary.json")).unwrap();
        let parsed: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(parsed["kind"], "single");
        let cond = &parsed["conditions"][0];
        assert_eq!(cond["name"], "sapda");
        let mut finals = Vec::new();
        for seed in [0u64, 1] {
            let csv = fs::read_to_string(report.dir.join(format!("sapda/seed-{seed}/history.csv")))
                .unwrap();
            let last = csv.lines().last().unwrap();
            finals.push(last.split(',').nth(4).unwrap().parse::<f64>().unwrap());
        }
        let (mean, std) = mean_std(&finals);
        assert_eq!(cond["mean_accuracy"].as_f64().unwrap(), sig9(mean));
        assert_eq!(cond["std_accuracy"].as_f64().unwrap(), sig9(std));
        fs::remove_dir_all(&base).unwrap();
    }

    #[test]
    fn sweep_kinds_produce_one_directory_per_condition() {
        let base = std::env::temp_dir().join(format!("sapda-sweep-{}", std::process::id()));
        let mut m = tiny_manifest(&base);
        m.kind = ExperimentKind::BetaSweep;
        m.seeds = vec![0];
        m.betas = vec![0.05, 0.5];
        let report = run(&m).unwrap();
        assert_eq!(report.conditions.len(), 2);
        assert!(report.dir.join("beta-0.05/seed-0/history.csv").is_file());
        assert!(report.dir.join("beta-0.5/weights_final.json").is_file());
        fs::remove_dir_all(&base).unwrap();
    }
}
