//! Independent reference implementations and the runtime invariant suite.
//!
//! Everything here re-derives a result the production code also computes,
//! through a different route: exhaustive set-partition search instead of the
//! sorted break search, a literal formula transcription instead of the
//! incremental score, central finite differences instead of backpropagation.
//! The `check` subcommand runs [`run_invariant_suite`]; the heavier versions
//! of the same comparisons live in the acceptance tests.

use crate::error::{Error, Result};
use crate::losses::{
    cluster_loss, entropy, entropy_weight, target_entropy_loss, weighted_classifier_loss,
    weighted_domain_loss,
};
use crate::net::{
    log_softmax_rows, GradientReversal, Head, Mat, NetConfig, NetworkParams, SubNet,
};
use crate::rng::SplitMix64;
use crate::weights::{ch_index, optimal_partition, select_k, ClassWeightVector, WeightTable};

/// Step used by every central finite difference.
pub const FD_H: f64 = 1e-5;
/// Acceptance threshold on the symmetric relative error.
pub const FD_TOL: f64 = 1e-4;

/// Symmetric relative error, floored so vanishing gradients compare cleanly.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Uniform class-evidence vector normalised like a real one: entries in
/// [0, 1] with the maximum exactly 1.
pub fn random_weight_vector(n: usize, rng: &mut SplitMix64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
    ClassWeightVector::from_values(raw).expect("uniform draws are valid weights").values().to_vec()
}

// ---------------------------------------------------------------------------
// Partition oracle: exhaustive search over ALL set partitions.

fn enumerate_assignments(
    assignment: &mut Vec<usize>,
    pos: usize,
    used: usize,
    k: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    let n = assignment.len();
    if pos == n {
        if used == k {
            visit(assignment);
        }
        return;
    }
    // Groups still to open must fit into the remaining slots.
    if k - used > n - pos {
        return;
    }
    let reachable = (used + 1).min(k);
    for g in 0..reachable {
        assignment[pos] = g;
        let now_used = used.max(g + 1);
        enumerate_assignments(assignment, pos + 1, now_used, k, visit);
    }
}

/// Dispersion of an arbitrary set partition, accumulated in the same
/// canonical order the production search uses: members ascending by
/// (value, index), groups in order of first appearance along that sort. For
/// a partition that is contiguous in sorted order this reproduces the
/// production cost bit for bit.
pub fn set_partition_cost(values: &[f64], assignment: &[usize]) -> f64 {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let groups = assignment.iter().max().map_or(0, |&m| m + 1);
    let mut blocks: Vec<Vec<usize>> = Vec::with_capacity(groups);
    let mut rank = vec![usize::MAX; groups];
    for &i in &order {
        let g = assignment[i];
        if rank[g] == usize::MAX {
            rank[g] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[rank[g]].push(i);
    }
    let nf = n as f64;
    let mut cost = 0.0;
    for block in &blocks {
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
        cost += ssd / nf;
    }
    cost
}

/// Minimum dispersion over every set partition of the classes into k
/// non-empty groups, contiguous or not.
pub fn brute_force_min_cost(values: &[f64], k: usize) -> Result<f64> {
    let n = values.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("{n} values cannot form {k} groups")));
    }
    if n > 16 {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search over {n} values is not tractable"
        )));
    }
    let mut assignment = vec![0usize; n];
    let mut best = f64::INFINITY;
    enumerate_assignments(&mut assignment, 0, 0, k, &mut |a| {
        let cost = set_partition_cost(values, a);
        if cost < best {
            best = cost;
        }
    });
    Ok(best)
}

// ---------------------------------------------------------------------------
// Cluster-score reference: the formula sequence transcribed literally.

/// Reference cluster score from an explicit group assignment (ids 0..k, all
/// non-empty): between-group dispersion of the group means around the grand
/// mean weighted by group share, over the group-averaged within dispersion,
/// each divided by its degrees of freedom.
pub fn ch_reference(values: &[f64], assignment: &[usize], k: usize) -> Result<f64> {
    let n = values.len();
    if k < 2 || n <= k {
        return Err(Error::InvalidArgument(format!("no degrees of freedom for k={k}, n={n}")));
    }
    if assignment.len() != n || assignment.iter().any(|&g| g >= k) {
        return Err(Error::InvalidArgument("assignment does not cover the classes".into()));
    }
    let mut count = vec![0usize; k];
    let mut sum = vec![0.0; k];
    for (i, &g) in assignment.iter().enumerate() {
        count[g] += 1;
        sum[g] += values[i];
    }
    if count.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument("empty group in assignment".into()));
    }
    let grand = values.iter().sum::<f64>() / n as f64;
    let mean: Vec<f64> = (0..k).map(|g| sum[g] / count[g] as f64).collect();
    let mut tr_b = 0.0;
    for g in 0..k {
        let d = mean[g] - grand;
        tr_b += count[g] as f64 / n as f64 * d * d;
    }
    let mut within = 0.0;
    for (i, &g) in assignment.iter().enumerate() {
        let d = values[i] - mean[g];
        within += d * d;
    }
    let tr_s = within / k as f64;
    if tr_s == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((tr_b / (k - 1) as f64) / (tr_s / (n - k) as f64))
}

// ---------------------------------------------------------------------------
// Geometry oracle.

/// Fraction of rows whose nearest centre (squared distance, ties to the
/// lowest index) matches the label.
pub fn nearest_centroid_accuracy(inputs: &Mat, labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    if inputs.rows == 0 {
        return 0.0;
    }
    let mut correct = 0usize;
    for r in 0..inputs.rows {
        let x = inputs.row(r);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let mut d = 0.0;
            for (xi, ci) in x.iter().zip(center) {
                let diff = xi - ci;
                d += diff * diff;
            }
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if best == labels[r] {
            correct += 1;
        }
    }
    correct as f64 / inputs.rows as f64
}

// ---------------------------------------------------------------------------
// Gradient oracles: central differences against backpropagation.

/// Worst finite-difference comparison over the sampled parameters.
#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

fn central_difference(
    params: &mut NetworkParams,
    index: usize,
    value: &mut dyn FnMut(&mut NetworkParams) -> Result<f64>,
) -> Result<f64> {
    let theta = params.param(index);
    params.set_param(index, theta + FD_H);
    let plus = value(params)?;
    params.set_param(index, theta - FD_H);
    let minus = value(params)?;
    params.set_param(index, theta);
    Ok((plus - minus) / (2.0 * FD_H))
}

fn sample_block_indices(
    params: &NetworkParams,
    block: SubNet,
    count: usize,
    rng: &mut SplitMix64,
) -> Vec<usize> {
    let range = params.block_range(block);
    (0..count).map(|_| range.start + rng.below(range.end - range.start)).collect()
}

fn require_zero_blocks(params: &NetworkParams, blocks: &[SubNet]) -> Result<()> {
    for &block in blocks {
        for i in params.block_range(block) {
            let g = params.grad(i);
            if g != 0.0 {
                return Err(Error::Contract(format!(
                    "{block:?} parameter {i} received gradient {g} from a loss that must not touch it"
                )));
            }
        }
    }
    Ok(())
}

/// Compare accumulated gradients against central differences of `value` on
/// `per_block` random parameters from each listed block. `scale(block)` is
/// the factor the analytic gradient is expected to carry on top of the plain
/// derivative of `value` (reversal or loss-weight factors).
fn compare_blocks(
    params: &mut NetworkParams,
    analytic: &[f64],
    blocks: &[(SubNet, f64)],
    per_block: usize,
    rng: &mut SplitMix64,
    value: &mut dyn FnMut(&mut NetworkParams) -> Result<f64>,
) -> Result<GradReport> {
    let mut report = GradReport { checked: 0, max_rel_err: 0.0, worst_index: 0 };
    for &(block, scale) in blocks {
        for index in sample_block_indices(params, block, per_block, rng) {
            let numeric = scale * central_difference(params, index, value)?;
            let e = rel_err(analytic[index], numeric);
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst_index = index;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

fn fd_net(rng: &mut SplitMix64) -> Result<NetworkParams> {
    NetworkParams::new(NetConfig::new(3, 6), rng.next_u64())
}

fn gaussian_batch(rows: usize, cols: usize, rng: &mut SplitMix64) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in &mut m.data {
        *v = rng.normal();
    }
    m
}

fn random_table(classes: usize, rng: &mut SplitMix64) -> WeightTable {
    // Strictly positive weights keep the checked function smooth; the zero-
    // weight case is covered by the invisibility check instead.
    let raw: Vec<f64> = (0..classes).map(|_| 0.05 + 0.95 * rng.next_f64()).collect();
    let per_class = ClassWeightVector::from_values(raw).expect("positive weights").values().to_vec();
    WeightTable { per_class, k_star: 2, ch2: None, ch3: None }
}

/// Finite-difference check of the weighted source cross-entropy, with the
/// certainty factors frozen at their base values the way the analytic
/// gradient treats them.
pub fn check_classifier_gradients(seed: u64, per_block: usize) -> Result<GradReport> {
    let mut rng = SplitMix64::new(seed);
    let mut params = fd_net(&mut rng)?;
    let x = gaussian_batch(5, 3, &mut rng);
    let labels: Vec<usize> = (0..5).map(|_| rng.below(6)).collect();
    let table = random_table(6, &mut rng);

    params.zero_grads();
    weighted_classifier_loss(&mut params, &x, &labels, &table, true)?;
    let analytic = params.grad_vec();
    require_zero_blocks(&params, &[SubNet::Domain, SubNet::Cluster])?;

    let base = params.forward(&x, Head::Classifier)?;
    let frozen_m: Vec<f64> = (0..x.rows).map(|r| entropy_weight(base.probs.row(r))).collect();
    let weights = table.per_class.clone();
    let labels_v = labels.clone();
    let mut value = move |p: &mut NetworkParams| -> Result<f64> {
        let tape = p.forward(&x, Head::Classifier)?;
        let logp = log_softmax_rows(tape.logits());
        let n = logp.rows as f64;
        let mut v = 0.0;
        for r in 0..logp.rows {
            v += weights[labels_v[r]] * frozen_m[r] * -logp.row(r)[labels_v[r]];
        }
        Ok(v / n)
    };
    compare_blocks(
        &mut params,
        &analytic,
        &[(SubNet::Feature, 1.0), (SubNet::Classifier, 1.0)],
        per_block,
        &mut rng,
        &mut value,
    )
}

/// Finite-difference check of the adversarial domain objective. The value
/// being differenced is the descent form (negated objective) with frozen
/// certainty factors; the discriminator block must match it directly and the
/// feature block must match it scaled by the reversal strength, negated.
pub fn check_domain_gradients(seed: u64, per_block: usize) -> Result<GradReport> {
    let mut rng = SplitMix64::new(seed);
    let mut params = fd_net(&mut rng)?;
    let src = gaussian_batch(5, 3, &mut rng);
    let labels: Vec<usize> = (0..5).map(|_| rng.below(6)).collect();
    let tgt = gaussian_batch(4, 3, &mut rng);
    let table = random_table(6, &mut rng);
    let lambda = 0.7;
    let reversal = GradientReversal::new(lambda)?;

    params.zero_grads();
    let out =
        weighted_domain_loss(&mut params, &src, &labels, &tgt, &table, true, &reversal)?;
    if out.clamp_events != 0 {
        return Err(Error::Contract(
            "saturated discriminator in the gradient check setup".into(),
        ));
    }
    let analytic = params.grad_vec();
    require_zero_blocks(&params, &[SubNet::Classifier, SubNet::Cluster])?;

    let base = params.forward(&src, Head::Classifier)?;
    let frozen_m: Vec<f64> = (0..src.rows).map(|r| entropy_weight(base.probs.row(r))).collect();
    let weights = table.per_class.clone();
    let labels_v = labels.clone();
    let mut value = move |p: &mut NetworkParams| -> Result<f64> {
        let s = p.forward(&src, Head::Domain)?;
        let t = p.forward(&tgt, Head::Domain)?;
        let ns = src.rows as f64;
        let nt = tgt.rows as f64;
        let mut j = 0.0;
        for r in 0..src.rows {
            j += weights[labels_v[r]] * frozen_m[r] * s.probs.row(r)[0].ln() / ns;
        }
        for r in 0..tgt.rows {
            j += (1.0 - t.probs.row(r)[0]).ln() / nt;
        }
        Ok(-j)
    };
    compare_blocks(
        &mut params,
        &analytic,
        &[(SubNet::Domain, 1.0), (SubNet::Feature, -lambda)],
        per_block,
        &mut rng,
        &mut value,
    )
}

/// Finite-difference check of the cluster-consistency objective; gradients
/// carry the loss weight on both the head and the feature extractor.
pub fn check_cluster_gradients(seed: u64, per_block: usize) -> Result<GradReport> {
    let mut rng = SplitMix64::new(seed);
    let mut params = fd_net(&mut rng)?;
    let src = gaussian_batch(5, 3, &mut rng);
    let labels: Vec<usize> = (0..5).map(|_| rng.below(6)).collect();
    let tgt = gaussian_batch(4, 3, &mut rng);
    let table = random_table(6, &mut rng);
    let beta = 0.3;

    params.zero_grads();
    let out = cluster_loss(&mut params, &src, &labels, &tgt, &table, beta)?;
    if out.clamp_events != 0 {
        return Err(Error::Contract("saturated cluster head in the gradient check setup".into()));
    }
    let analytic = params.grad_vec();
    require_zero_blocks(&params, &[SubNet::Classifier, SubNet::Domain])?;

    let weights = table.per_class.clone();
    let labels_v = labels.clone();
    let mut value = move |p: &mut NetworkParams| -> Result<f64> {
        let s = p.forward(&src, Head::Cluster)?;
        let t = p.forward(&tgt, Head::Cluster)?;
        let ns = src.rows as f64;
        let nt = tgt.rows as f64;
        let mut v = 0.0;
        for r in 0..src.rows {
            let soft = weights[labels_v[r]];
            let prob = s.probs.row(r)[0];
            v += -(soft * prob.ln() + (1.0 - soft) * (1.0 - prob).ln()) / ns;
        }
        for r in 0..tgt.rows {
            v += -t.probs.row(r)[0].ln() / nt;
        }
        Ok(v)
    };
    compare_blocks(
        &mut params,
        &analytic,
        &[(SubNet::Cluster, beta), (SubNet::Feature, beta)],
        per_block,
        &mut rng,
        &mut value,
    )
}

/// Finite-difference check of the optional target-entropy term.
pub fn check_entropy_gradients(seed: u64, per_block: usize) -> Result<GradReport> {
    let mut rng = SplitMix64::new(seed);
    let mut params = fd_net(&mut rng)?;
    let tgt = gaussian_batch(5, 3, &mut rng);
    let weight = 0.25;

    params.zero_grads();
    target_entropy_loss(&mut params, &tgt, weight)?;
    let analytic = params.grad_vec();
    require_zero_blocks(&params, &[SubNet::Domain, SubNet::Cluster])?;

    let mut value = move |p: &mut NetworkParams| -> Result<f64> {
        let tape = p.forward(&tgt, Head::Classifier)?;
        let mut v = 0.0;
        for r in 0..tgt.rows {
            v += entropy(tape.probs.row(r));
        }
        Ok(v / tgt.rows as f64)
    };
    compare_blocks(
        &mut params,
        &analytic,
        &[(SubNet::Feature, weight), (SubNet::Classifier, weight)],
        per_block,
        &mut rng,
        &mut value,
    )
}

/// Reversal linearity at the loss level: feature gradients under strength 2
/// are bitwise twice the strength-1 gradients, strength 0 zeroes them, and
/// the discriminator block never notices the change.
pub fn check_reversal_scaling(seed: u64) -> Result<()> {
    let mut rng = SplitMix64::new(seed);
    let mut params = fd_net(&mut rng)?;
    let src = gaussian_batch(5, 3, &mut rng);
    let labels: Vec<usize> = (0..5).map(|_| rng.below(6)).collect();
    let tgt = gaussian_batch(4, 3, &mut rng);
    let table = random_table(6, &mut rng);

    let grads_for = |params: &mut NetworkParams, lambda: f64| -> Result<Vec<f64>> {
        params.zero_grads();
        let reversal = GradientReversal::new(lambda)?;
        weighted_domain_loss(params, &src, &labels, &tgt, &table, true, &reversal)?;
        Ok(params.grad_vec())
    };
    let g1 = grads_for(&mut params, 1.0)?;
    let g2 = grads_for(&mut params, 2.0)?;
    let g0 = grads_for(&mut params, 0.0)?;

    for i in params.block_range(SubNet::Feature) {
        if g2[i].to_bits() != (2.0 * g1[i]).to_bits() {
            return Err(Error::Contract(format!(
                "feature gradient {i} does not scale linearly with the reversal strength"
            )));
        }
        if g0[i] != 0.0 {
            return Err(Error::Contract(format!(
                "feature gradient {i} is {} under reversal strength 0",
                g0[i]
            )));
        }
    }
    for i in params.block_range(SubNet::Domain) {
        if g1[i].to_bits() != g2[i].to_bits() || g1[i].to_bits() != g0[i].to_bits() {
            return Err(Error::Contract(format!(
                "discriminator gradient {i} depends on the reversal strength"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// The `check` subcommand's suite.

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<String>) -> CheckResult {
    match run() {
        Ok(detail) => CheckResult { name, passed: true, detail },
        Err(e) => CheckResult { name, passed: false, detail: e.to_string() },
    }
}

fn fail(msg: String) -> Error {
    Error::Contract(msg)
}

/// Run every fast invariant and oracle comparison. Deterministic in `seed`;
/// a failed row carries the diagnostic in its detail.
pub fn run_invariant_suite(seed: u64) -> Vec<CheckResult> {
    let mut master = SplitMix64::new(seed);
    let mut seeds = Vec::new();
    for _ in 0..16 {
        seeds.push(master.next_u64());
    }
    let mut out = Vec::new();

    out.push(check("classifier-simplex", || {
        let mut rng = SplitMix64::new(seeds[0]);
        let params = fd_net(&mut rng)?;
        let x = gaussian_batch(50, 3, &mut rng);
        let tape = params.forward(&x, Head::Classifier)?;
        let mut worst: f64 = 0.0;
        for r in 0..x.rows {
            let row = tape.probs.row(r);
            if row.iter().any(|&p| p < 0.0) {
                return Err(fail(format!("negative probability in row {r}")));
            }
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        if worst > 1e-12 {
            return Err(fail(format!("row sum off by {worst:.3e}")));
        }
        Ok(format!("50 rows, max |sum - 1| = {worst:.3e}"))
    }));

    out.push(check("weight-normalisation", || {
        let mut rng = SplitMix64::new(seeds[1]);
        for _ in 0..50 {
            let params = fd_net(&mut rng)?;
            let x = gaussian_batch(20, 3, &mut rng);
            let tape = params.forward(&x, Head::Classifier)?;
            let wc = ClassWeightVector::from_probability_rows(&tape.probs)?;
            let max = wc.values().iter().copied().fold(f64::MIN, f64::max);
            if max != 1.0 {
                return Err(fail(format!("maximum entry {max} is not exactly 1")));
            }
            if wc.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(fail("entry outside [0, 1]".into()));
            }
        }
        Ok("50 random nets, max entry exactly 1".into())
    }));

    out.push(check("certainty-weight-range", || {
        let mut rng = SplitMix64::new(seeds[2]);
        for _ in 0..200 {
            let logits = gaussian_batch(1, 6, &mut rng);
            let probs = crate::net::softmax_rows(&logits);
            let m = entropy_weight(probs.row(0));
            if !(m > 1.0 && m <= 2.0) {
                return Err(fail(format!("certainty weight {m} outside (1, 2]")));
            }
        }
        let one_hot = [1.0, 0.0, 0.0, 0.0];
        if entropy_weight(&one_hot) != 2.0 {
            return Err(fail("one-hot row must score exactly 2".into()));
        }
        Ok("200 random rows in (1, 2], one-hot hits 2".into())
    }));

    out.push(check("weight-table-image", || {
        let mut rng = SplitMix64::new(seeds[3]);
        for trial in 0..100 {
            let n = 4 + rng.below(7);
            let values = random_weight_vector(n, &mut rng);
            let sel = select_k(&values, 0.1)?;
            let table = sel.weight_table()?;
            let middle = if sel.k_star == 3 { Some(sel.chosen().group_means[1]) } else { None };
            for &w in &table.per_class {
                let allowed = w == 0.0 || w == 1.0 || middle == Some(w);
                if !allowed {
                    return Err(fail(format!(
                        "trial {trial}: weight {w} outside {{0, middle mean, 1}} for k*={}",
                        sel.k_star
                    )));
                }
            }
        }
        Ok("100 random vectors, image within {0, middle mean, 1}".into())
    }));

    out.push(check("monotone-dispersion", || {
        let mut rng = SplitMix64::new(seeds[4]);
        for _ in 0..100 {
            let n = 4 + rng.below(7);
            let values = random_weight_vector(n, &mut rng);
            let c1 = optimal_partition(&values, 1)?.cost;
            let c2 = optimal_partition(&values, 2)?.cost;
            let c3 = optimal_partition(&values, 3)?.cost;
            if !(c1 >= c2 && c2 >= c3 && c3 >= 0.0) {
                return Err(fail(format!("dispersion not monotone: {c1} {c2} {c3}")));
            }
        }
        Ok("100 random vectors, cost(1) >= cost(2) >= cost(3) >= 0".into())
    }));

    out.push(check("permutation-equivariance", || {
        let mut rng = SplitMix64::new(seeds[5]);
        for _ in 0..50 {
            let n = 5 + rng.below(5);
            let values = random_weight_vector(n, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.below(i + 1));
            }
            let mut shuffled = vec![0.0; n];
            for (i, &p) in perm.iter().enumerate() {
                shuffled[p] = values[i];
            }
            let base = select_k(&values, 0.1)?.weight_table()?;
            let moved = select_k(&shuffled, 0.1)?.weight_table()?;
            for (i, &p) in perm.iter().enumerate() {
                if base.per_class[i].to_bits() != moved.per_class[p].to_bits() {
                    return Err(fail(format!("weight of class {i} changed under relabeling")));
                }
            }
        }
        Ok("50 random permutations carry weights along exactly".into())
    }));

    out.push(check("outlier-invisibility", || {
        let mut rng = SplitMix64::new(seeds[6]);
        let mut params = fd_net(&mut rng)?;
        let mut table = random_table(6, &mut rng);
        table.per_class[2] = 0.0;
        let labels = vec![0, 2, 4, 2, 1];
        let x_a = gaussian_batch(5, 3, &mut rng);
        let mut x_b = x_a.clone();
        for v in x_b.row_mut(1) {
            *v += 10.0;
        }
        for v in x_b.row_mut(3) {
            *v = -*v;
        }
        let reversal = GradientReversal::new(0.9)?;
        let tgt = gaussian_batch(4, 3, &mut rng);
        let grads = |params: &mut NetworkParams, x: &Mat| -> Result<Vec<f64>> {
            params.zero_grads();
            weighted_classifier_loss(params, x, &labels, &table, true)?;
            weighted_domain_loss(params, x, &labels, &tgt, &table, true, &reversal)?;
            Ok(params.grad_vec())
        };
        let ga = grads(&mut params, &x_a)?;
        let gb = grads(&mut params, &x_b)?;
        for (i, (a, b)) in ga.iter().zip(&gb).enumerate() {
            if a.to_bits() != b.to_bits() {
                return Err(fail(format!(
                    "gradient {i} noticed a zero-weight sample moving ({a} vs {b})"
                )));
            }
        }
        Ok("classifier and domain gradients ignore zero-weight samples bitwise".into())
    }));

    out.push(check("partition-oracle", || {
        let mut rng = SplitMix64::new(seeds[7]);
        for trial in 0..20 {
            let n = 4 + rng.below(5);
            let values = random_weight_vector(n, &mut rng);
            for k in [2usize, 3] {
                let fast = optimal_partition(&values, k)?.cost;
                let brute = brute_force_min_cost(&values, k)?;
                if fast.to_bits() != brute.to_bits() {
                    return Err(fail(format!(
                        "trial {trial}, k={k}: search found {fast}, exhaustive found {brute}"
                    )));
                }
            }
        }
        Ok("20 vectors, search cost equals exhaustive cost exactly".into())
    }));

    out.push(check("score-oracle", || {
        let mut rng = SplitMix64::new(seeds[8]);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let n = 5 + rng.below(5);
            let values = random_weight_vector(n, &mut rng);
            for k in [2usize, 3] {
                let part = optimal_partition(&values, k)?;
                let fast = ch_index(&values, &part)?;
                let reference = ch_reference(&values, &part.assignment, k)?;
                if fast.is_infinite() && reference.is_infinite() {
                    continue;
                }
                worst = worst.max(rel_err(fast, reference));
            }
        }
        if worst > 1e-9 {
            return Err(fail(format!("score disagrees with the reference by {worst:.3e}")));
        }
        Ok(format!("20 vectors, max relative error {worst:.3e}"))
    }));

    out.push(check("gradient-oracle", || {
        let mut worst: f64 = 0.0;
        for (name, report) in [
            ("classifier", check_classifier_gradients(seeds[9], 6)?),
            ("domain", check_domain_gradients(seeds[10], 6)?),
            ("cluster", check_cluster_gradients(seeds[11], 6)?),
            ("entropy", check_entropy_gradients(seeds[12], 6)?),
        ] {
            if report.max_rel_err > FD_TOL {
                return Err(fail(format!(
                    "{name} loss: relative error {:.3e} at parameter {}",
                    report.max_rel_err, report.worst_index
                )));
            }
            worst = worst.max(report.max_rel_err);
        }
        Ok(format!("4 losses, max relative error {worst:.3e}"))
    }));

    out.push(check("reversal-antisymmetry", || {
        check_reversal_scaling(seeds[13])?;
        Ok("feature gradients scale by -lambda exactly".into())
    }));

    out
}
