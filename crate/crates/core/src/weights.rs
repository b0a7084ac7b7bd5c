//! Self-adaptive class weight evaluation.
//!
//! The target model's mean class-probability vector is normalised so its
//! largest entry is 1, then partitioned by exact one-dimensional natural-breaks
//! clustering into k contiguous groups of sorted values. A Calinski-Harabasz
//! score picks k in {2, 3} (k = 1 when the vector is nearly uniform), and the
//! groups map to per-class weights: shared classes get 1, outlier classes get
//! 0, and with k = 3 the middle "confused" group gets its own mean weight.

use crate::error::{Error, Result};
use crate::net::Mat;

/// Mean class-probability vector of the target domain, normalised so
/// max = 1. Entries stay in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeightVector {
    values: Vec<f64>,
}

impl ClassWeightVector {
    /// Average probability rows (one row per target sample, one column per
    /// source class) and normalise by the largest class mean.
    pub fn from_probability_rows(rows: &Mat) -> Result<Self> {
        if rows.rows == 0 || rows.cols == 0 {
            return Err(Error::InvalidArgument("empty probability matrix".into()));
        }
        let n = rows.rows as f64;
        let mut means = vec![0.0; rows.cols];
        for r in 0..rows.rows {
            for (m, v) in means.iter_mut().zip(rows.row(r)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        Self::from_values(means)
    }

    /// Normalise a raw non-negative vector by its maximum.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty class weight vector".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "class weights must be finite and non-negative".into(),
            ));
        }
        let max = values.iter().copied().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Err(Error::Contract("all-zero class weight vector".into()));
        }
        for v in &mut values {
            *v /= max;
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn class_count(&self) -> usize {
        self.values.len()
    }

    pub fn spread(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// A partition of class indices into k groups, contiguous over the classes
/// sorted by weight value. Group 0 has the highest mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub k: usize,
    /// Class index -> group id in 0..k.
    pub assignment: Vec<usize>,
    /// Group means, strictly ordered high to low (ties only between equal
    /// values).
    pub group_means: Vec<f64>,
    pub group_sizes: Vec<usize>,
    /// Total dispersion: sum over groups of the squared deviations from the
    /// group mean, divided by the class count.
    pub cost: f64,
}

/// Class indices ordered ascending by (value, index); the deterministic tie
/// rule for every search below.
fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    order
}

/// Mean and squared-deviation sum of one block, accumulated in block order so
/// independent implementations of the same blocks agree bitwise.
fn block_stats(values: &[f64], block: &[usize]) -> (f64, f64) {
    let mut sum = 0.0;
    for &i in block {
        sum += values[i];
    }
    let mean = sum / block.len() as f64;
    let mut ssd = 0.0;
    for &i in block {
        let d = values[i] - mean;
        ssd += d * d;
    }
    (mean, ssd)
}

/// Dispersion of blocks listed ascending by value: sum of each block's
/// squared-deviation sum divided by the total class count.
fn blocks_cost(values: &[f64], blocks: &[&[usize]]) -> f64 {
    let n = values.len() as f64;
    let mut cost = 0.0;
    for block in blocks {
        let (_, ssd) = block_stats(values, block);
        cost += ssd / n;
    }
    cost
}

fn build_partition(values: &[f64], order: &[usize], bounds: &[usize]) -> Partition {
    // bounds are block start offsets into `order`, ascending, first = 0.
    let k = bounds.len();
    let n = order.len();
    let mut assignment = vec![0usize; n];
    let mut group_means = Vec::with_capacity(k);
    let mut group_sizes = Vec::with_capacity(k);
    let mut blocks: Vec<&[usize]> = Vec::with_capacity(k);
    for b in 0..k {
        let start = bounds[b];
        let end = if b + 1 < k { bounds[b + 1] } else { n };
        blocks.push(&order[start..end]);
    }
    let cost = blocks_cost(values, &blocks);
    // Blocks ascend in value; expose groups descending so group 0 is the
    // shared-class candidate.
    for (gid, block) in blocks.iter().rev().enumerate() {
        let (mean, _) = block_stats(values, block);
        group_means.push(mean);
        group_sizes.push(block.len());
        for &i in *block {
            assignment[i] = gid;
        }
    }
    Partition { k, assignment, group_means, group_sizes, cost }
}

/// Exact minimum-dispersion partition into k contiguous groups of the sorted
/// values, by exhaustive search over break placements. Ties prefer the
/// lexicographically smallest break positions over the ascending order.
pub fn optimal_partition(values: &[f64], k: usize) -> Result<Partition> {
    let n = values.len();
    if k == 0 || k > 3 {
        return Err(Error::InvalidArgument(format!("group count {k} outside 1..=3")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("{n} classes cannot form {k} groups")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("class weights must be finite".into()));
    }
    let order = ascending_order(values);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut consider = |bounds: &[usize]| {
        let blocks: Vec<&[usize]> = bounds
            .iter()
            .enumerate()
            .map(|(b, &start)| {
                let end = if b + 1 < bounds.len() { bounds[b + 1] } else { n };
                &order[start..end]
            })
            .collect();
        let cost = blocks_cost(values, &blocks);
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, bounds.to_vec()));
        }
    };
    match k {
        1 => consider(&[0]),
        2 => {
            for b1 in 1..n {
                consider(&[0, b1]);
            }
        }
        3 => {
            for b1 in 1..n - 1 {
                for b2 in b1 + 1..n {
                    consider(&[0, b1, b2]);
                }
            }
        }
        _ => unreachable!(),
    }
    let (_, bounds) = best.expect("at least one break placement exists");
    Ok(build_partition(values, &order, &bounds))
}

/// Build the partition given explicit break offsets (block starts after the
/// implicit 0) over the ascending value order. Used by diagnostics and the
/// reference checks.
pub fn partition_from_breaks(values: &[f64], breaks: &[usize]) -> Result<Partition> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty class weight vector".into()));
    }
    let mut bounds = vec![0usize];
    bounds.extend_from_slice(breaks);
    for w in bounds.windows(2) {
        if w[1] <= w[0] || w[1] >= n {
            return Err(Error::InvalidArgument(format!("break offsets {breaks:?} invalid for {n} classes")));
        }
    }
    let order = ascending_order(values);
    Ok(build_partition(values, &order, &bounds))
}

/// Calinski-Harabasz score of a partition: between-group dispersion (group
/// means around the global mean, weighted by group share) over within-group
/// dispersion (averaged over groups), each scaled by its degrees of freedom.
/// Zero within-group dispersion yields +infinity.
pub fn ch_index(values: &[f64], partition: &Partition) -> Result<f64> {
    let n = values.len();
    let k = partition.k;
    if k < 2 {
        return Err(Error::InvalidArgument("the score needs at least 2 groups".into()));
    }
    if n <= k {
        return Err(Error::InvalidArgument(format!(
            "{n} classes leave no degrees of freedom for {k} groups"
        )));
    }
    if partition.assignment.len() != n {
        return Err(Error::Contract("partition does not cover the class set".into()));
    }
    let mut total = 0.0;
    for v in values {
        total += v;
    }
    let grand_mean = total / n as f64;
    let mut tr_b = 0.0;
    for g in 0..k {
        let share = partition.group_sizes[g] as f64 / n as f64;
        let d = partition.group_means[g] - grand_mean;
        tr_b += share * d * d;
    }
    let mut tr_s = 0.0;
    for (i, &g) in partition.assignment.iter().enumerate() {
        let d = values[i] - partition.group_means[g];
        tr_s += d * d;
    }
    tr_s /= k as f64;
    if tr_s == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((tr_b / (k - 1) as f64) / (tr_s / (n - k) as f64))
}

/// Outcome of cluster-count selection.
#[derive(Debug, Clone)]
pub struct KSelection {
    pub k_star: usize,
    /// Optimal partitions for k = 1, 2, 3 (index k - 1).
    pub partitions: Vec<Partition>,
    pub ch2: f64,
    pub ch3: f64,
    pub spread: f64,
}

/// Pick the cluster count: 1 when the vector spread (max - min) is below
/// `tau_uniform`, otherwise the k in {2, 3} with the larger score, preferring
/// 2 on ties.
pub fn select_k(values: &[f64], tau_uniform: f64) -> Result<KSelection> {
    let n = values.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "cluster-count selection needs at least 4 classes, got {n}"
        )));
    }
    if !(tau_uniform > 0.0) {
        return Err(Error::Config(format!("tau_uniform {tau_uniform} must be positive")));
    }
    let partitions = vec![
        optimal_partition(values, 1)?,
        optimal_partition(values, 2)?,
        optimal_partition(values, 3)?,
    ];
    let ch2 = ch_index(values, &partitions[1])?;
    let ch3 = ch_index(values, &partitions[2])?;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    let k_star = if spread < tau_uniform {
        1
    } else if ch3 > ch2 {
        3
    } else {
        2
    };
    Ok(KSelection { k_star, partitions, ch2, ch3, spread })
}

/// Map a partition to per-class weights. Group 0 (highest mean) gets 1; the
/// lowest group gets 0; with k = 3 the middle group gets its own mean value.
/// With k = 1 every class keeps weight 1.
pub fn assign_weights(partition: &Partition) -> Result<Vec<f64>> {
    let group_weight: Vec<f64> = match partition.k {
        1 => vec![1.0],
        2 => vec![1.0, 0.0],
        3 => vec![1.0, partition.group_means[1], 0.0],
        k => {
            return Err(Error::InvalidArgument(format!("no weight rule for {k} groups")));
        }
    };
    Ok(partition.assignment.iter().map(|&g| group_weight[g]).collect())
}

/// Per-class training weights together with the selection diagnostics that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub per_class: Vec<f64>,
    /// Selected cluster count; 0 when weight evaluation is disabled and the
    /// table holds raw or uniform weights.
    pub k_star: usize,
    pub ch2: Option<f64>,
    pub ch3: Option<f64>,
}

impl WeightTable {
    /// Initial table: weight 1 for every class.
    pub fn uniform(class_count: usize) -> Self {
        Self { per_class: vec![1.0; class_count], k_star: 1, ch2: None, ch3: None }
    }

    pub(crate) fn check_classes(&self, classes: usize) -> Result<()> {
        if self.per_class.len() != classes {
            return Err(Error::Contract(format!(
                "weight table covers {} classes, network has {classes}",
                self.per_class.len()
            )));
        }
        Ok(())
    }
}

impl KSelection {
    pub fn chosen(&self) -> &Partition {
        &self.partitions[self.k_star - 1]
    }

    pub fn weight_table(&self) -> Result<WeightTable> {
        Ok(WeightTable {
            per_class: assign_weights(self.chosen())?,
            k_star: self.k_star,
            ch2: Some(self.ch2),
            ch3: Some(self.ch3),
        })
    }
}
