//! Training objectives.
//!
//! All losses run their own forward pass, accumulate exact gradients into the
//! shared parameter store and return the scalar value. Per-sample weights
//! come from the current [`WeightTable`]; the entropy-based sample weight
//! m(x) = 1 + exp(-H(x)) is computed from the classifier's live output and is
//! treated as a constant during differentiation, so confident samples count
//! for more without feeding a second gradient path.

use crate::error::{Error, Result};
use crate::net::{log_softmax_rows, GradientReversal, Head, Mat, NetworkParams};
use crate::weights::WeightTable;

/// Probabilities are clamped into [PROB_FLOOR, 1 - PROB_FLOOR] before any
/// logarithm in the domain and cluster objectives.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// Number of probability entries that hit the clamp while computing the
    /// value; a nonzero count flags saturated discriminator or cluster heads.
    pub clamp_events: u64,
}

/// Shannon entropy of one probability row, in nats; zero entries contribute 0.
pub fn entropy(prob_row: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in prob_row {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// Certainty weight m(x) = 1 + exp(-H(x)); in (1, 2], largest for one-hot
/// predictions.
pub fn entropy_weight(prob_row: &[f64]) -> f64 {
    1.0 + (-entropy(prob_row)).exp()
}

fn clamp_prob(p: f64, events: &mut u64) -> f64 {
    if p < PROB_FLOOR {
        *events += 1;
        PROB_FLOOR
    } else if p > 1.0 - PROB_FLOOR {
        *events += 1;
        1.0 - PROB_FLOOR
    } else {
        p
    }
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Contract(format!(
            "label count {} does not match batch rows {rows}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{classes}")));
    }
    Ok(())
}

/// Weighted source cross-entropy: mean over the batch of
/// w(y_i) * m(x_i) * CE(p_i, y_i). With `entropy_weighting` off, m = 1 and
/// the loss reduces to plain weighted supervised training.
pub fn weighted_classifier_loss(
    params: &mut NetworkParams,
    inputs: &Mat,
    labels: &[usize],
    weights: &WeightTable,
    entropy_weighting: bool,
) -> Result<LossOutput> {
    let classes = params.config.class_count;
    check_labels(labels, inputs.rows, classes)?;
    weights.check_classes(classes)?;
    if inputs.rows == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let tape = params.forward(inputs, Head::Classifier)?;
    let logp = log_softmax_rows(tape.logits());
    let n = inputs.rows as f64;
    let mut value = 0.0;
    let mut dlogits = Mat::zeros(inputs.rows, classes);
    for r in 0..inputs.rows {
        let y = labels[r];
        let w = weights.per_class[y];
        let m = if entropy_weighting { entropy_weight(tape.probs.row(r)) } else { 1.0 };
        value += w * m * -logp.row(r)[y];
        let scale = w * m / n;
        let prow = tape.probs.row(r);
        let drow = dlogits.row_mut(r);
        for c in 0..classes {
            let target = if c == y { 1.0 } else { 0.0 };
            drow[c] = scale * (prow[c] - target);
        }
    }
    params.backward(&tape, &dlogits, None)?;
    Ok(LossOutput { value: value / n, clamp_events: 0 })
}

/// Weighted adversarial domain objective:
///
///   J = mean_src[ w * m * ln D(x) ] + mean_tgt[ ln(1 - D(x)) ].
///
/// The discriminator ascends J (its gradient store receives the descent
/// direction of -J); the feature extractor descends J because its gradient
/// passes through `reversal`. The returned value is J itself.
pub fn weighted_domain_loss(
    params: &mut NetworkParams,
    source: &Mat,
    source_labels: &[usize],
    target: &Mat,
    weights: &WeightTable,
    entropy_weighting: bool,
    reversal: &GradientReversal,
) -> Result<LossOutput> {
    let classes = params.config.class_count;
    check_labels(source_labels, source.rows, classes)?;
    weights.check_classes(classes)?;
    if source.rows == 0 || target.rows == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut clamp_events = 0;

    // Certainty weights come from the classifier's current response to the
    // source batch; no gradient flows along this path.
    let m_src: Vec<f64> = if entropy_weighting {
        let ctape = params.forward(source, Head::Classifier)?;
        (0..source.rows).map(|r| entropy_weight(ctape.probs.row(r))).collect()
    } else {
        vec![1.0; source.rows]
    };

    let ns = source.rows as f64;
    let nt = target.rows as f64;
    let stape = params.forward(source, Head::Domain)?;
    let mut value = 0.0;
    let mut dsrc = Mat::zeros(source.rows, 1);
    for r in 0..source.rows {
        let w = weights.per_class[source_labels[r]];
        let d = stape.probs.row(r)[0];
        value += w * m_src[r] * clamp_prob(d, &mut clamp_events).ln() / ns;
        // Descent direction of -J for the discriminator.
        dsrc.row_mut(r)[0] = w * m_src[r] * (d - 1.0) / ns;
    }
    params.backward(&stape, &dsrc, Some(reversal))?;

    let ttape = params.forward(target, Head::Domain)?;
    let mut dtgt = Mat::zeros(target.rows, 1);
    for r in 0..target.rows {
        let d = ttape.probs.row(r)[0];
        value += (1.0 - clamp_prob(d, &mut clamp_events)).ln() / nt;
        dtgt.row_mut(r)[0] = d / nt;
    }
    params.backward(&ttape, &dtgt, Some(reversal))?;

    Ok(LossOutput { value, clamp_events })
}

/// Cluster-consistency objective: binary cross-entropy of the cluster head
/// against soft targets, w(y_i) for source samples and 1 for target samples.
/// The returned value is unscaled; gradients are scaled by `beta` on both the
/// cluster head and the feature extractor.
pub fn cluster_loss(
    params: &mut NetworkParams,
    source: &Mat,
    source_labels: &[usize],
    target: &Mat,
    weights: &WeightTable,
    beta: f64,
) -> Result<LossOutput> {
    let classes = params.config.class_count;
    check_labels(source_labels, source.rows, classes)?;
    weights.check_classes(classes)?;
    if source.rows == 0 || target.rows == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta {beta} must be finite and >= 0")));
    }
    let mut clamp_events = 0;
    let ns = source.rows as f64;
    let nt = target.rows as f64;

    let stape = params.forward(source, Head::Cluster)?;
    let mut value = 0.0;
    let mut dsrc = Mat::zeros(source.rows, 1);
    for r in 0..source.rows {
        let t = weights.per_class[source_labels[r]];
        let p = stape.probs.row(r)[0];
        let pc = clamp_prob(p, &mut clamp_events);
        value += -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln()) / ns;
        dsrc.row_mut(r)[0] = beta * (p - t) / ns;
    }
    params.backward(&stape, &dsrc, None)?;

    let ttape = params.forward(target, Head::Cluster)?;
    let mut dtgt = Mat::zeros(target.rows, 1);
    for r in 0..target.rows {
        let p = ttape.probs.row(r)[0];
        value += -clamp_prob(p, &mut clamp_events).ln() / nt;
        dtgt.row_mut(r)[0] = beta * (p - 1.0) / nt;
    }
    params.backward(&ttape, &dtgt, None)?;

    Ok(LossOutput { value, clamp_events })
}

/// Optional target entropy minimisation: mean classifier entropy over the
/// target batch. Gradients are scaled by `weight`; the value is unscaled.
pub fn target_entropy_loss(
    params: &mut NetworkParams,
    target: &Mat,
    weight: f64,
) -> Result<LossOutput> {
    if target.rows == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let classes = params.config.class_count;
    let tape = params.forward(target, Head::Classifier)?;
    let n = target.rows as f64;
    let mut value = 0.0;
    let mut dlogits = Mat::zeros(target.rows, classes);
    for r in 0..target.rows {
        let prow = tape.probs.row(r);
        let h = entropy(prow);
        value += h / n;
        let drow = dlogits.row_mut(r);
        for c in 0..classes {
            let p = prow[c];
            // dH/dz_c = -p_c (ln p_c + H); the p ln p limit at 0 is 0.
            let term = if p > 0.0 { -p * (p.ln() + h) } else { 0.0 };
            drow[c] = weight * term / n;
        }
    }
    params.backward(&tape, &dlogits, None)?;
    Ok(LossOutput { value, clamp_events: 0 })
}
