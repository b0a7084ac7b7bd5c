//! Synthetic partial-domain-adaptation benchmark.
//!
//! Source classes are isotropic Gaussian blobs centred on a circle in the
//! first two input dimensions. The target domain keeps the first
//! `target_classes` blobs and pushes every centre through a fixed affine
//! shift (rotation, scale, translation), so the two domains disagree while
//! remaining recognisably related. Target ground-truth labels are kept only
//! for evaluation and dataset dumps; the training API never sees them.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::net::Mat;
use crate::rng::SplitMix64;

/// Affine domain shift x -> scale * Rot(rotation_deg) * x + translation,
/// rotating in the first two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub rotation_deg: f64,
    pub scale: f64,
    /// Per-dimension offset; empty means zero.
    pub translation: Vec<f64>,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self { rotation_deg: 0.0, scale: 1.0, translation: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdaTaskSpec {
    pub source_classes: usize,
    pub target_classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Circle radius the class centres sit on.
    pub radius: f64,
    /// Isotropic standard deviation of each blob.
    pub noise: f64,
    pub shift: ShiftSpec,
    pub seed: u64,
}

impl PdaTaskSpec {
    /// The default benchmark: 8 source classes, 4 shared target classes,
    /// 200 samples per class in 2-D, radius 4, noise 0.45, target shifted by
    /// a 30-degree rotation and 1.1x scale.
    pub fn blobs8to4(seed: u64) -> Self {
        Self {
            source_classes: 8,
            target_classes: 4,
            samples_per_class: 200,
            input_dim: 2,
            radius: 4.0,
            noise: 0.45,
            shift: ShiftSpec { rotation_deg: 30.0, scale: 1.1, translation: Vec::new() },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_classes == 0 {
            return Err(Error::Config("source_classes must be >= 1".into()));
        }
        if self.source_classes > 64 {
            return Err(Error::Config("source_classes must be <= 64".into()));
        }
        if self.target_classes == 0 || self.target_classes > self.source_classes {
            return Err(Error::Config(
                "target_classes must be in 1..=source_classes".into(),
            ));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be >= 1".into()));
        }
        if self.input_dim < 2 {
            return Err(Error::Config("input_dim must be >= 2 (rotation plane)".into()));
        }
        if !(self.noise > 0.0) {
            return Err(Error::Config("noise must be > 0".into()));
        }
        if !(self.shift.scale > 0.0) {
            return Err(Error::Config("shift scale must be > 0".into()));
        }
        if !self.shift.translation.is_empty() && self.shift.translation.len() != self.input_dim {
            return Err(Error::Config(format!(
                "translation has {} entries, input_dim is {}",
                self.shift.translation.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Centre of a source class: radius * (cos a, sin a, 0, ...) with
    /// a = 2*pi*c / source_classes.
    pub fn source_center(&self, class: usize) -> Vec<f64> {
        let a = std::f64::consts::TAU * class as f64 / self.source_classes as f64;
        let mut c = vec![0.0; self.input_dim];
        c[0] = self.radius * a.cos();
        c[1] = self.radius * a.sin();
        c
    }

    /// Source centre pushed through the domain shift.
    pub fn target_center(&self, class: usize) -> Vec<f64> {
        self.apply_shift(&self.source_center(class))
    }

    fn apply_shift(&self, x: &[f64]) -> Vec<f64> {
        let theta = self.shift.rotation_deg.to_radians();
        let (sin, cos) = theta.sin_cos();
        let mut out = x.to_vec();
        out[0] = x[0] * cos - x[1] * sin;
        out[1] = x[0] * sin + x[1] * cos;
        for v in &mut out {
            *v *= self.shift.scale;
        }
        if !self.shift.translation.is_empty() {
            for (v, t) in out.iter_mut().zip(&self.shift.translation) {
                *v += t;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub inputs: Mat,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    pub inputs: Mat,
}

/// A generated benchmark instance. `target_train` carries no labels; the
/// ground truth for those samples lives in `target_train_labels` and is used
/// only by dataset dumps and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PdaTask {
    pub spec: PdaTaskSpec,
    pub source: LabeledSet,
    pub target_train: UnlabeledSet,
    pub target_train_labels: Vec<usize>,
    pub target_test: LabeledSet,
}

/// Deterministically generate a task: same spec, same bits. Target samples
/// alternate into train (even index within class) and test (odd index).
pub fn generate_task(spec: &PdaTaskSpec) -> Result<PdaTask> {
    spec.validate()?;
    let d = spec.input_dim;
    let n = spec.samples_per_class;
    let mut rng = SplitMix64::new(spec.seed);

    let mut src_rows = Vec::with_capacity(spec.source_classes * n);
    let mut src_labels = Vec::with_capacity(spec.source_classes * n);
    for class in 0..spec.source_classes {
        let center = spec.source_center(class);
        for _ in 0..n {
            let mut x = Vec::with_capacity(d);
            for cdim in &center {
                x.push(cdim + spec.noise * rng.normal());
            }
            src_rows.push(x);
            src_labels.push(class);
        }
    }

    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_rows = Vec::new();
    let mut test_labels = Vec::new();
    for class in 0..spec.target_classes {
        let center = spec.target_center(class);
        for i in 0..n {
            let mut x = Vec::with_capacity(d);
            for cdim in &center {
                x.push(cdim + spec.noise * rng.normal());
            }
            if i % 2 == 0 {
                train_rows.push(x);
                train_labels.push(class);
            } else {
                test_rows.push(x);
                test_labels.push(class);
            }
        }
    }

    Ok(PdaTask {
        spec: spec.clone(),
        source: LabeledSet { inputs: Mat::from_rows(&src_rows)?, labels: src_labels },
        target_train: UnlabeledSet { inputs: Mat::from_rows(&train_rows)? },
        target_train_labels: train_labels,
        target_test: LabeledSet { inputs: Mat::from_rows(&test_rows)?, labels: test_labels },
    })
}

/// Draw a minibatch with replacement. With `class_balanced`, batch slots
/// cycle through the distinct labels in ascending order and sample uniformly
/// within each class, so a batch of size k*|classes| hits every class exactly
/// k times.
pub fn minibatch_labeled(
    set: &LabeledSet,
    batch_size: usize,
    rng: &mut SplitMix64,
    class_balanced: bool,
) -> Result<(Mat, Vec<usize>)> {
    if set.inputs.rows == 0 || batch_size == 0 {
        return Err(Error::InvalidArgument("empty set or zero batch".into()));
    }
    let mut rows = Mat::zeros(batch_size, set.inputs.cols);
    let mut labels = Vec::with_capacity(batch_size);
    if class_balanced {
        let mut classes: Vec<usize> = set.labels.clone();
        classes.sort_unstable();
        classes.dedup();
        let per_class: Vec<Vec<usize>> = classes
            .iter()
            .map(|&c| (0..set.labels.len()).filter(|&i| set.labels[i] == c).collect())
            .collect();
        for b in 0..batch_size {
            let ci = b % classes.len();
            let idx = per_class[ci][rng.below(per_class[ci].len())];
            rows.row_mut(b).copy_from_slice(set.inputs.row(idx));
            labels.push(set.labels[idx]);
        }
    } else {
        for b in 0..batch_size {
            let idx = rng.below(set.inputs.rows);
            rows.row_mut(b).copy_from_slice(set.inputs.row(idx));
            labels.push(set.labels[idx]);
        }
    }
    Ok((rows, labels))
}

pub fn minibatch_unlabeled(
    set: &UnlabeledSet,
    batch_size: usize,
    rng: &mut SplitMix64,
) -> Result<Mat> {
    if set.inputs.rows == 0 || batch_size == 0 {
        return Err(Error::InvalidArgument("empty set or zero batch".into()));
    }
    let mut rows = Mat::zeros(batch_size, set.inputs.cols);
    for b in 0..batch_size {
        let idx = rng.below(set.inputs.rows);
        rows.row_mut(b).copy_from_slice(set.inputs.row(idx));
    }
    Ok(rows)
}

/// The three sets of a dataset dump. Target-train labels ride along for
/// plotting but are not part of the training interface.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCsv {
    pub source: LabeledSet,
    pub target_train: UnlabeledSet,
    pub target_train_labels: Vec<usize>,
    pub target_test: LabeledSet,
}

/// Write `domain,class,x0..x(d-1)` rows; floats use the shortest lossless
/// form so a round-trip reproduces the task bit for bit.
pub fn write_dataset_csv<W: Write>(task: &PdaTask, mut out: W) -> Result<()> {
    let d = task.spec.input_dim;
    let mut header = String::from("domain,class");
    for i in 0..d {
        header.push_str(&format!(",x{i}"));
    }
    writeln!(out, "{header}")?;
    let mut dump = |domain: &str, inputs: &Mat, labels: &[usize]| -> Result<()> {
        for r in 0..inputs.rows {
            let mut line = format!("{domain},{}", labels[r]);
            for v in inputs.row(r) {
                line.push_str(&format!(",{v}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    };
    dump("source", &task.source.inputs, &task.source.labels)?;
    dump("target_train", &task.target_train.inputs, &task.target_train_labels)?;
    dump("target_test", &task.target_test.inputs, &task.target_test.labels)?;
    Ok(())
}

pub fn read_dataset_csv<R: BufRead>(input: R) -> Result<DatasetCsv> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty dataset file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "domain" || cols[1] != "class" {
        return Err(Error::InvalidArgument(format!("unexpected dataset header: {header}")));
    }
    let d = cols.len() - 2;
    let mut sets: [(Vec<Vec<f64>>, Vec<usize>); 3] = Default::default();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let domain = parts.next().unwrap_or_default();
        let which = match domain {
            "source" => 0,
            "target_train" => 1,
            "target_test" => 2,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "line {}: unknown domain {other:?}",
                    lineno + 2
                )));
            }
        };
        let class: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("line {}: bad class", lineno + 2)))?;
        let xs: Vec<f64> = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 2)))?;
        if xs.len() != d {
            return Err(Error::InvalidArgument(format!(
                "line {}: {} coordinates, header promises {d}",
                lineno + 2,
                xs.len()
            )));
        }
        sets[which].0.push(xs);
        sets[which].1.push(class);
    }
    let [src, ttr, tte] = sets;
    Ok(DatasetCsv {
        source: LabeledSet { inputs: Mat::from_rows(&src.0)?, labels: src.1 },
        target_train: UnlabeledSet { inputs: Mat::from_rows(&ttr.0)? },
        target_train_labels: ttr.1,
        target_test: LabeledSet { inputs: Mat::from_rows(&tte.0)?, labels: tte.1 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = PdaTaskSpec::blobs8to4(7);
        let a = generate_task(&spec).unwrap();
        let b = generate_task(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shapes_and_split_sizes() {
        let spec = PdaTaskSpec::blobs8to4(1);
        let task = generate_task(&spec).unwrap();
        assert_eq!(task.source.inputs.rows, 8 * 200);
        assert_eq!(task.target_train.inputs.rows, 4 * 100);
        assert_eq!(task.target_test.inputs.rows, 4 * 100);
        // Exactly 100 train samples per target class.
        for c in 0..4 {
            assert_eq!(task.target_train_labels.iter().filter(|&&l| l == c).count(), 100);
            assert_eq!(task.target_test.labels.iter().filter(|&&l| l == c).count(), 100);
        }
    }

    #[test]
    fn identity_shift_keeps_target_centers() {
        let mut spec = PdaTaskSpec::blobs8to4(3);
        spec.shift = ShiftSpec::default();
        for c in 0..spec.target_classes {
            assert_eq!(spec.target_center(c), spec.source_center(c));
        }
    }

    #[test]
    fn inverse_shift_recovers_source_centers() {
        let spec = PdaTaskSpec::blobs8to4(3);
        let theta = spec.shift.rotation_deg.to_radians();
        let (sin, cos) = theta.sin_cos();
        for c in 0..spec.target_classes {
            let t = spec.target_center(c);
            // Undo scale, then rotation.
            let u = [t[0] / spec.shift.scale, t[1] / spec.shift.scale];
            let back = [u[0] * cos + u[1] * sin, -u[0] * sin + u[1] * cos];
            let s = spec.source_center(c);
            assert!((back[0] - s[0]).abs() < 1e-9 && (back[1] - s[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn within_domain_separability_is_high() {
        // Nearest-centroid accuracy on the generated blobs; the default
        // geometry keeps adjacent centres ~6.8 sigma apart.
        let spec = PdaTaskSpec::blobs8to4(11);
        let task = generate_task(&spec).unwrap();
        let centers: Vec<Vec<f64>> =
            (0..spec.source_classes).map(|c| spec.source_center(c)).collect();
        let acc = crate::verify::nearest_centroid_accuracy(
            &task.source.inputs,
            &task.source.labels,
            &centers,
        );
        assert!(acc > 0.99, "source separability {acc}");
        let tcenters: Vec<Vec<f64>> =
            (0..spec.target_classes).map(|c| spec.target_center(c)).collect();
        let tacc = crate::verify::nearest_centroid_accuracy(
            &task.target_test.inputs,
            &task.target_test.labels,
            &tcenters,
        );
        assert!(tacc > 0.99, "target separability {tacc}");
    }

    #[test]
    fn validate_names_the_violated_constraint() {
        let mut spec = PdaTaskSpec::blobs8to4(1);
        spec.target_classes = 9;
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("target_classes"));
        let mut spec = PdaTaskSpec::blobs8to4(1);
        spec.noise = 0.0;
        assert!(spec.validate().unwrap_err().to_string().contains("noise"));
        let mut spec = PdaTaskSpec::blobs8to4(1);
        spec.shift.translation = vec![1.0];
        assert!(spec.validate().unwrap_err().to_string().contains("translation"));
    }

    #[test]
    fn unbalanced_minibatch_frequencies_are_binomial() {
        // 10k draws over 8 balanced classes: each class count should fall
        // within 3 sigma of 1250.
        let spec = PdaTaskSpec {
            target_classes: 8,
            ..PdaTaskSpec::blobs8to4(5)
        };
        let task = generate_task(&spec).unwrap();
        let mut rng = SplitMix64::new(123);
        let mut counts = [0usize; 8];
        let (_, labels) = minibatch_labeled(&task.source, 10_000, &mut rng, false).unwrap();
        for l in labels {
            counts[l] += 1;
        }
        let expect = 10_000.0 / 8.0;
        let sigma = (10_000.0_f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
        for (c, &n) in counts.iter().enumerate() {
            assert!(
                (n as f64 - expect).abs() <= 3.0 * sigma,
                "class {c} drawn {n} times, expected {expect} +- {}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn balanced_minibatch_covers_classes_exactly() {
        let spec = PdaTaskSpec::blobs8to4(5);
        let task = generate_task(&spec).unwrap();
        let mut rng = SplitMix64::new(9);
        let n = task.source.inputs.rows;
        let (_, labels) = minibatch_labeled(&task.source, n, &mut rng, true).unwrap();
        for c in 0..8 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), n / 8);
        }
    }

    #[test]
    fn dataset_csv_roundtrips_bit_exactly() {
        let spec = PdaTaskSpec { samples_per_class: 6, ..PdaTaskSpec::blobs8to4(2) };
        let task = generate_task(&spec).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&task, &mut buf).unwrap();
        let back = read_dataset_csv(&buf[..]).unwrap();
        assert_eq!(back.source, task.source);
        assert_eq!(back.target_train, task.target_train);
        assert_eq!(back.target_train_labels, task.target_train_labels);
        assert_eq!(back.target_test, task.target_test);
    }

    #[test]
    fn dataset_csv_rejects_garbage() {
        assert!(read_dataset_csv("nonsense\n".as_bytes()).is_err());
        let bad = "domain,class,x0,x1\nmoon,0,1.0,2.0\n";
        assert!(read_dataset_csv(bad.as_bytes()).is_err());
    }
}
