//! Self-adaptive partial domain adaptation on synthetic benchmarks.
//!
//! The crate trains a small adversarial network (feature extractor, source
//! classifier, domain discriminator, cluster classifier) on labelled source
//! data plus unlabelled target data whose label space is a subset of the
//! source's. During training the per-class sample weights are re-estimated by
//! exact one-dimensional clustering of the mean class-probability vector, with
//! the cluster count picked by a Calinski-Harabasz score, so outlier source
//! classes are silenced without a hand-tuned threshold.
//!
//! Everything is deterministic given a seed: data generation, initialisation,
//! minibatching and the training loop itself all draw from one counter-based
//! generator, so identical configs reproduce bit-identical trajectories.

pub mod data;
pub mod error;
pub mod losses;
pub mod net;
pub mod rng;
pub mod trainer;
pub mod verify;
pub mod weights;

pub use data::{
    generate_task, minibatch_labeled, minibatch_unlabeled, read_dataset_csv, write_dataset_csv,
    DatasetCsv, LabeledSet, PdaTask, PdaTaskSpec, ShiftSpec, UnlabeledSet,
};
pub use error::{Error, Result};
pub use net::{
    Activation, GradientReversal, Head, LrSchedule, Mat, NetConfig, NetworkParams, SubNet,
};
pub use rng::SplitMix64;
pub use trainer::{
    evaluate, run_ablations, train, RunRecord, TrainConfig, TrainMode, TrainOutcome,
};
pub use weights::{
    assign_weights, ch_index, optimal_partition, partition_from_breaks, select_k,
    ClassWeightVector, KSelection, Partition, WeightTable,
};
