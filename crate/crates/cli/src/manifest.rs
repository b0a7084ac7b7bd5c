//! Flat key=value experiment configuration.
//!
//! Resolution order: built-in defaults, then the config file, then `SAPDA_*`
//! environment variables, then command-line flags. The fully resolved
//! manifest is echoed into the run directory, and `to_text` round-trips
//! losslessly through `apply` (floats print in shortest-roundtrip form).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sapda::{PdaTaskSpec, TrainConfig, TrainMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Single,
    Ablation,
    BetaSweep,
    ClassSweep,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Single => "single",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::BetaSweep => "beta-sweep",
            ExperimentKind::ClassSweep => "class-sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(ExperimentKind::Single),
            "ablation" => Ok(ExperimentKind::Ablation),
            "beta-sweep" => Ok(ExperimentKind::BetaSweep),
            "class-sweep" => Ok(ExperimentKind::ClassSweep),
            other => bail!("unknown kind {other:?}; expected single, ablation, beta-sweep or class-sweep"),
        }
    }
}

/// Every key the config format accepts, in the order `to_text` emits them.
pub const KEYS: [&str; 27] = [
    "kind",
    "seeds",
    "out",
    "task.source_classes",
    "task.target_classes",
    "task.samples_per_class",
    "task.input_dim",
    "task.radius",
    "task.noise",
    "task.rotation_deg",
    "task.scale",
    "task.translation",
    "train.mode",
    "train.total_iterations",
    "train.update_interval",
    "train.batch_size",
    "train.beta",
    "train.gamma0",
    "train.eta",
    "train.alpha",
    "train.lambda_ramp",
    "train.tau_uniform",
    "train.target_entropy_min",
    "train.lambda_h",
    "train.class_balanced_source",
    "betas",
    "target_class_counts",
];

#[derive(Debug, Clone)]
pub struct ExperimentManifest {
    pub kind: ExperimentKind,
    /// One run per seed; each seed drives both task generation and training.
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Task template; the per-run seed replaces its seed field.
    pub task: PdaTaskSpec,
    /// Training template; kind expansion replaces mode, beta or seed.
    pub train: TrainConfig,
    pub betas: Vec<f64>,
    pub target_class_counts: Vec<usize>,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Single,
            seeds: vec![0, 1, 2, 3, 4],
            out: PathBuf::from("runs"),
            task: PdaTaskSpec::blobs8to4(0),
            train: TrainConfig::desk(TrainMode::Sapda, 0),
            betas: vec![0.01, 0.02, 0.05, 0.1, 0.5, 1.0],
            target_class_counts: vec![2, 4, 6, 8],
        }
    }
}

fn parse_list<T: FromStr>(value: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|e| anyhow!("{key}: cannot parse {:?}: {e}", part.trim()))
        })
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentManifest {
    /// Set one key from its text form. Unknown keys list the valid ones.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "kind" => self.kind = v.parse()?,
            "seeds" => self.seeds = parse_list(v, key)?,
            "out" => self.out = PathBuf::from(v),
            "task.source_classes" => self.task.source_classes = parse(v, key)?,
            "task.target_classes" => self.task.target_classes = parse(v, key)?,
            "task.samples_per_class" => self.task.samples_per_class = parse(v, key)?,
            "task.input_dim" => self.task.input_dim = parse(v, key)?,
            "task.radius" => self.task.radius = parse(v, key)?,
            "task.noise" => self.task.noise = parse(v, key)?,
            "task.rotation_deg" => self.task.shift.rotation_deg = parse(v, key)?,
            "task.scale" => self.task.shift.scale = parse(v, key)?,
            "task.translation" => self.task.shift.translation = parse_list(v, key)?,
            "train.mode" => {
                self.train.mode = v.parse::<TrainMode>().map_err(|e| anyhow!("{key}: {e}"))?
            }
            "train.total_iterations" => self.train.total_iterations = parse(v, key)?,
            "train.update_interval" => self.train.update_interval = parse(v, key)?,
            "train.batch_size" => self.train.batch_size = parse(v, key)?,
            "train.beta" => self.train.beta = parse(v, key)?,
            "train.gamma0" => self.train.lr.gamma0 = parse(v, key)?,
            "train.eta" => self.train.lr.eta = parse(v, key)?,
            "train.alpha" => self.train.lr.alpha = parse(v, key)?,
            "train.lambda_ramp" => self.train.lambda_ramp = parse(v, key)?,
            "train.tau_uniform" => self.train.tau_uniform = parse(v, key)?,
            "train.target_entropy_min" => self.train.target_entropy_min = parse(v, key)?,
            "train.lambda_h" => self.train.lambda_h = parse(v, key)?,
            "train.class_balanced_source" => self.train.class_balanced_source = parse(v, key)?,
            "betas" => self.betas = parse_list(v, key)?,
            "target_class_counts" => self.target_class_counts = parse_list(v, key)?,
            unknown => bail!("unknown key {unknown:?}; valid keys: {}", KEYS.join(", ")),
        }
        Ok(())
    }

    /// Parse a whole config file body (one `key = value` per line, `#`
    /// comments and blank lines allowed).
    pub fn apply_file(&mut self, body: &str, origin: &str) -> Result<()> {
        for (lineno, raw) in body.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key = value, got {line:?}", lineno + 1))?;
            self.apply(key.trim(), value)
                .with_context(|| format!("{origin}:{}", lineno + 1))?;
        }
        Ok(())
    }

    /// Apply `SAPDA_*` environment overrides ("train.beta" reads
    /// `SAPDA_TRAIN_BETA`).
    pub fn apply_env(&mut self) -> Result<()> {
        for key in KEYS {
            let var = format!("SAPDA_{}", key.to_uppercase().replace('.', "_"));
            if let Ok(value) = std::env::var(&var) {
                self.apply(key, &value).with_context(|| format!("environment variable {var}"))?;
            }
        }
        Ok(())
    }

    /// Full manifest in file form, every key in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            if v.is_empty() {
                out.push_str(" =");
            } else {
                out.push_str(" = ");
                out.push_str(&v);
            }
            out.push('\n');
        };
        line("kind", self.kind.to_string());
        line("seeds", join(&self.seeds));
        line("out", self.out.display().to_string());
        line("task.source_classes", self.task.source_classes.to_string());
        line("task.target_classes", self.task.target_classes.to_string());
        line("task.samples_per_class", self.task.samples_per_class.to_string());
        line("task.input_dim", self.task.input_dim.to_string());
        line("task.radius", self.task.radius.to_string());
        line("task.noise", self.task.noise.to_string());
        line("task.rotation_deg", self.task.shift.rotation_deg.to_string());
        line("task.scale", self.task.shift.scale.to_string());
        line("task.translation", join(&self.task.shift.translation));
        line("train.mode", self.train.mode.to_string());
        line("train.total_iterations", self.train.total_iterations.to_string());
        line("train.update_interval", self.train.update_interval.to_string());
        line("train.batch_size", self.train.batch_size.to_string());
        line("train.beta", self.train.beta.to_string());
        line("train.gamma0", self.train.lr.gamma0.to_string());
        line("train.eta", self.train.lr.eta.to_string());
        line("train.alpha", self.train.lr.alpha.to_string());
        line("train.lambda_ramp", self.train.lambda_ramp.to_string());
        line("train.tau_uniform", self.train.tau_uniform.to_string());
        line("train.target_entropy_min", self.train.target_entropy_min.to_string());
        line("train.lambda_h", self.train.lambda_h.to_string());
        line("train.class_balanced_source", self.train.class_balanced_source.to_string());
        line("betas", join(&self.betas));
        line("target_class_counts", join(&self.target_class_counts));
        out
    }

    /// Expand the experiment into named (task, train) conditions; the runner
    /// crosses these with the seed list.
    pub fn conditions(&self) -> Result<Vec<(String, PdaTaskSpec, TrainConfig)>> {
        let out = match self.kind {
            ExperimentKind::Single => {
                vec![(self.train.mode.to_string(), self.task.clone(), self.train.clone())]
            }
            ExperimentKind::Ablation => TrainMode::ALL
                .iter()
                .map(|&mode| {
                    let mut train = self.train.clone();
                    train.mode = mode;
                    (mode.to_string(), self.task.clone(), train)
                })
                .collect(),
            ExperimentKind::BetaSweep => {
                if self.betas.is_empty() {
                    bail!("beta-sweep needs a non-empty betas list");
                }
                self.betas
                    .iter()
                    .map(|&beta| {
                        let mut train = self.train.clone();
                        train.beta = beta;
                        (format!("beta-{beta}"), self.task.clone(), train)
                    })
                    .collect()
            }
            ExperimentKind::ClassSweep => {
                if self.target_class_counts.is_empty() {
                    bail!("class-sweep needs a non-empty target_class_counts list");
                }
                self.target_class_counts
                    .iter()
                    .map(|&count| {
                        let mut task = self.task.clone();
                        task.target_classes = count;
                        (format!("classes-{count}"), task, self.train.clone())
                    })
                    .collect()
            }
        };
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        let mut seen = std::collections::HashSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                bail!("seeds repeat seed {s}; each seed gets its own run directory");
            }
        }
        self.task.validate()?;
        self.train.validate()?;
        let mut names = std::collections::HashSet::new();
        for (name, task, train) in self.conditions()? {
            if !names.insert(name.clone()) {
                bail!("conditions collide on the name {name:?}");
            }
            task.validate().with_context(|| format!("condition {name}"))?;
            train.validate().with_context(|| format!("condition {name}"))?;
        }
        Ok(())
    }
}

fn parse<T: FromStr>(value: &str, key: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}
