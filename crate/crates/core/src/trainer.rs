//! End-to-end training loop: alternating minibatch optimization of the
//! weighted saddle-point objective with periodic re-estimation of the class
//! weight table.
//!
//! Every `update_interval` iterations the classifier's mean response to the
//! full target train set is turned into a [`ClassWeightVector`], the cluster
//! count is re-selected and the [`WeightTable`] is rebuilt. Between updates
//! the table is read-only. Before the first update every class has weight 1.

use std::fmt;
use std::str::FromStr;

use crate::data::{minibatch_labeled, minibatch_unlabeled, LabeledSet, PdaTask};
use crate::error::{Error, Result};
use crate::losses::{
    cluster_loss, target_entropy_loss, weighted_classifier_loss, weighted_domain_loss,
};
use crate::net::{GradientReversal, Head, LrSchedule, NetConfig, NetworkParams};
use crate::rng::SplitMix64;
use crate::weights::{assign_weights, select_k, ClassWeightVector, WeightTable};

/// Training variants. The sapda family re-estimates class weights every
/// interval; the rest are baselines and ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// Full method: selected cluster count, cluster head, entropy weighting.
    Sapda,
    /// Weight evaluation forced to two groups (shared / outlier).
    SapdaHard2,
    /// Weight evaluation forced to three groups (shared / confused / outlier).
    SapdaSoft3,
    /// Plain adversarial adaptation: all weights 1, no cluster head.
    UnweightedAdversarial,
    /// Supervised source training only.
    SourceOnly,
    /// Weight evaluation without the cluster head.
    NoClusterHead,
    /// Raw class-probability weights used directly, never partitioned.
    NoWeightEval,
}

impl TrainMode {
    pub const ALL: [TrainMode; 7] = [
        TrainMode::Sapda,
        TrainMode::SapdaHard2,
        TrainMode::SapdaSoft3,
        TrainMode::UnweightedAdversarial,
        TrainMode::SourceOnly,
        TrainMode::NoClusterHead,
        TrainMode::NoWeightEval,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Sapda => "sapda",
            TrainMode::SapdaHard2 => "sapda-hard2",
            TrainMode::SapdaSoft3 => "sapda-soft3",
            TrainMode::UnweightedAdversarial => "unweighted-adversarial",
            TrainMode::SourceOnly => "source-only",
            TrainMode::NoClusterHead => "no-cluster-head",
            TrainMode::NoWeightEval => "no-weight-eval",
        }
    }

    fn adversarial(&self) -> bool {
        !matches!(self, TrainMode::SourceOnly)
    }

    fn cluster_head(&self) -> bool {
        matches!(
            self,
            TrainMode::Sapda
                | TrainMode::SapdaHard2
                | TrainMode::SapdaSoft3
                | TrainMode::NoWeightEval
        )
    }

    /// Entropy weighting belongs to the method; the plain baselines train
    /// without it.
    fn entropy_weighted(&self) -> bool {
        !matches!(self, TrainMode::UnweightedAdversarial | TrainMode::SourceOnly)
    }

    fn updates_weights(&self) -> bool {
        !matches!(self, TrainMode::UnweightedAdversarial | TrainMode::SourceOnly)
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = TrainMode::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown mode {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub total_iterations: usize,
    pub update_interval: usize,
    pub batch_size: usize,
    /// Weight of the cluster-consistency term.
    pub beta: f64,
    pub lr: LrSchedule,
    /// Ramp the reversal strength 0 -> 1 over training; off pins it at 1.
    pub lambda_ramp: bool,
    /// Spread threshold below which the weight vector counts as uniform.
    pub tau_uniform: f64,
    /// Optional extra term: minimise mean classifier entropy on target.
    pub target_entropy_min: bool,
    /// Scale of the optional target-entropy term.
    pub lambda_h: f64,
    /// Cycle source minibatches through the classes instead of sampling
    /// uniformly.
    pub class_balanced_source: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults: 4000 iterations, weight update every 250,
    /// batches of 64.
    pub fn desk(mode: TrainMode, seed: u64) -> Self {
        Self {
            mode,
            total_iterations: 4000,
            update_interval: 250,
            batch_size: 64,
            beta: 0.1,
            lr: LrSchedule::default(),
            lambda_ramp: true,
            tau_uniform: 0.1,
            target_entropy_min: false,
            lambda_h: 0.1,
            class_balanced_source: false,
            seed,
        }
    }

    /// The full-scale cadence: 16000 iterations, update every 500.
    pub fn full_scale(mode: TrainMode, seed: u64) -> Self {
        Self { total_iterations: 16_000, update_interval: 500, ..Self::desk(mode, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.update_interval == 0 {
            return Err(Error::Config("update_interval must be >= 1".into()));
        }
        if self.total_iterations < self.update_interval {
            return Err(Error::Config(format!(
                "total_iterations {} < update_interval {}",
                self.total_iterations, self.update_interval
            )));
        }
        if self.total_iterations % self.update_interval != 0 {
            return Err(Error::Config(format!(
                "total_iterations {} is not a multiple of update_interval {}",
                self.total_iterations, self.update_interval
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::Config(format!("beta {} must be finite and >= 0", self.beta)));
        }
        if !(self.lr.gamma0 > 0.0) || !(self.lr.eta >= 0.0) || !(self.lr.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "bad learning-rate schedule ({}, {}, {})",
                self.lr.gamma0, self.lr.eta, self.lr.alpha
            )));
        }
        if !(self.tau_uniform > 0.0) {
            return Err(Error::Config(format!(
                "tau_uniform {} must be positive",
                self.tau_uniform
            )));
        }
        if !self.lambda_h.is_finite() || self.lambda_h < 0.0 {
            return Err(Error::Config(format!(
                "lambda_h {} must be finite and >= 0",
                self.lambda_h
            )));
        }
        Ok(())
    }
}

/// One row per weight update: interval-mean losses, current target-test
/// accuracy and the freshly computed weight diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub iteration: usize,
    pub classifier_loss: f64,
    pub domain_loss: f64,
    pub cluster_loss: f64,
    pub accuracy: f64,
    /// Selected (or forced) cluster count; 0 when weight evaluation is off.
    pub k_star: usize,
    pub ch2: Option<f64>,
    pub ch3: Option<f64>,
    /// Normalised class weight vector measured at this update.
    pub class_weights: Vec<f64>,
    /// Per-class training weights in force after this update.
    pub assigned_weights: Vec<f64>,
    pub clamp_events: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: Vec<RunRecord>,
}

fn ensure_finite(value: f64, iteration: usize, quantity: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { iteration, quantity: quantity.into() })
    }
}

/// Train on a task. Returns the final parameters and one [`RunRecord`] per
/// update interval. Any non-finite loss or gradient aborts with the
/// offending iteration in the error.
pub fn train(task: &PdaTask, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    task.spec.validate()?;
    let classes = task.spec.source_classes;
    let net_config = NetConfig::new(task.spec.input_dim, classes);

    let mut master = SplitMix64::new(config.seed);
    let param_seed = master.next_u64();
    let mut batch_rng = SplitMix64::new(master.next_u64());
    let mut params = NetworkParams::new(net_config, param_seed)?;

    let mut table = if config.mode.updates_weights() {
        WeightTable::uniform(classes)
    } else {
        WeightTable { per_class: vec![1.0; classes], k_star: 0, ch2: None, ch3: None }
    };

    let mut history = Vec::with_capacity(config.total_iterations / config.update_interval);
    let mut sum_lc = 0.0;
    let mut sum_ld = 0.0;
    let mut sum_lcl = 0.0;
    let mut clamp_events = 0u64;

    for i in 1..=config.total_iterations {
        if i == 1 && table.per_class.iter().any(|&w| w != 1.0) {
            return Err(Error::Contract("weights must start at 1 for every class".into()));
        }
        let q = (i - 1) as f64 / config.total_iterations as f64;
        let lambda = if config.lambda_ramp { GradientReversal::ramp(q) } else { 1.0 };
        let reversal = GradientReversal::new(lambda)?;

        let (src, src_labels) = minibatch_labeled(
            &task.source,
            config.batch_size,
            &mut batch_rng,
            config.class_balanced_source,
        )?;
        let entropy_weighted = config.mode.entropy_weighted();

        let lc = weighted_classifier_loss(&mut params, &src, &src_labels, &table, entropy_weighted)?;
        sum_lc += ensure_finite(lc.value, i, "classifier loss")?;
        clamp_events += lc.clamp_events;

        if config.mode.adversarial() {
            let tgt = minibatch_unlabeled(&task.target_train, config.batch_size, &mut batch_rng)?;
            let ld = weighted_domain_loss(
                &mut params,
                &src,
                &src_labels,
                &tgt,
                &table,
                entropy_weighted,
                &reversal,
            )?;
            sum_ld += ensure_finite(ld.value, i, "domain loss")?;
            clamp_events += ld.clamp_events;

            if config.mode.cluster_head() {
                let lcl =
                    cluster_loss(&mut params, &src, &src_labels, &tgt, &table, config.beta)?;
                sum_lcl += ensure_finite(lcl.value, i, "cluster loss")?;
                clamp_events += lcl.clamp_events;
            }
            if config.target_entropy_min {
                let lh = target_entropy_loss(&mut params, &tgt, config.lambda_h)?;
                ensure_finite(lh.value, i, "target entropy")?;
            }
        }

        params.sgd_step(&config.lr, q).map_err(|e| match e {
            Error::NonFiniteGradient { index } => Error::NonFinite {
                iteration: i,
                quantity: format!("gradient at parameter {index}"),
            },
            other => other,
        })?;

        if i % config.update_interval == 0 {
            let probe = params.forward(&task.target_train.inputs, Head::Classifier)?;
            let wc = ClassWeightVector::from_probability_rows(&probe.probs)?;
            if config.mode.updates_weights() {
                table = match config.mode {
                    TrainMode::Sapda | TrainMode::NoClusterHead => {
                        select_k(wc.values(), config.tau_uniform)?.weight_table()?
                    }
                    TrainMode::SapdaHard2 | TrainMode::SapdaSoft3 => {
                        let sel = select_k(wc.values(), config.tau_uniform)?;
                        let forced = if config.mode == TrainMode::SapdaHard2 { 2 } else { 3 };
                        WeightTable {
                            per_class: assign_weights(&sel.partitions[forced - 1])?,
                            k_star: forced,
                            ch2: Some(sel.ch2),
                            ch3: Some(sel.ch3),
                        }
                    }
                    TrainMode::NoWeightEval => WeightTable {
                        per_class: wc.values().to_vec(),
                        k_star: 0,
                        ch2: None,
                        ch3: None,
                    },
                    _ => unreachable!("mode {} does not update weights", config.mode),
                };
            }
            let denom = config.update_interval as f64;
            history.push(RunRecord {
                iteration: i,
                classifier_loss: sum_lc / denom,
                domain_loss: sum_ld / denom,
                cluster_loss: sum_lcl / denom,
                accuracy: evaluate(&params, &task.target_test)?,
                k_star: table.k_star,
                ch2: table.ch2,
                ch3: table.ch3,
                class_weights: wc.values().to_vec(),
                assigned_weights: table.per_class.clone(),
                clamp_events,
            });
            sum_lc = 0.0;
            sum_ld = 0.0;
            sum_lcl = 0.0;
            clamp_events = 0;
        }
    }

    Ok(TrainOutcome { params, history })
}

/// Fraction of test samples whose highest classifier probability lands on
/// the true label; ties resolve to the lowest class index.
pub fn evaluate(params: &NetworkParams, test: &LabeledSet) -> Result<f64> {
    if test.inputs.rows == 0 {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if test.labels.len() != test.inputs.rows {
        return Err(Error::Contract(format!(
            "test set has {} labels for {} rows",
            test.labels.len(),
            test.inputs.rows
        )));
    }
    let tape = params.forward(&test.inputs, Head::Classifier)?;
    let mut correct = 0usize;
    for r in 0..test.inputs.rows {
        let row = tape.probs.row(r);
        let mut best = 0;
        for (c, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = c;
            }
        }
        if best == test.labels[r] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.inputs.rows as f64)
}

/// Run the listed modes on one task with identical seed and hyperparameters.
pub fn run_ablations(
    task: &PdaTask,
    base: &TrainConfig,
    modes: &[TrainMode],
) -> Result<Vec<(TrainMode, TrainOutcome)>> {
    if modes.is_empty() {
        return Err(Error::Config("ablation mode list is empty".into()));
    }
    let mut out = Vec::with_capacity(modes.len());
    for &mode in modes {
        let config = TrainConfig { mode, ..base.clone() };
        out.push((mode, train(task, &config)?));
    }
    Ok(out)
}
