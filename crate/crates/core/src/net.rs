//! Micro dense-network compute core with exact reverse-mode gradients.
//!
//! Four sub-networks share one parameter store: a feature extractor, a
//! source classifier head, a domain discriminator head and a cluster
//! classifier head. Everything is 64-bit floats with fixed loop order, so a
//! given seed yields bit-identical results everywhere. The loss modules
//! compute gradients with respect to head logits; [`NetworkParams::backward`]
//! propagates them through the head and the feature extractor, optionally
//! passing the feature gradient through a sign-flipping reversal used for
//! adversarial training.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Row-major matrix of f64; rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Contract("ragged rows in matrix".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// One dense layer; weights are row-major with shape (out_dim, in_dim).
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    fn xavier(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut SplitMix64) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.uniform(-limit, limit)).collect();
        Self { in_dim, out_dim, weights, biases: vec![0.0; out_dim], activation }
    }

    #[cfg(test)]
    fn zeroed(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            activation,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer gradient buffers, same shapes as the owning [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn zero(&mut self) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|g| *g = 0.0);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

/// Activations recorded during a forward pass through one [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpTape {
    input: Mat,
    outputs: Vec<Mat>,
}

impl MlpTape {
    fn output(&self) -> &Mat {
        self.outputs.last().unwrap_or(&self.input)
    }
}

impl Mlp {
    fn forward(&self, x: &Mat) -> Result<MlpTape> {
        let mut tape = MlpTape { input: x.clone(), outputs: Vec::with_capacity(self.layers.len()) };
        for layer in &self.layers {
            let cur = tape.outputs.last().unwrap_or(&tape.input);
            if cur.cols != layer.in_dim {
                return Err(Error::Config(format!(
                    "input width {} does not match layer input {}",
                    cur.cols, layer.in_dim
                )));
            }
            let mut out = Mat::zeros(cur.rows, layer.out_dim);
            for r in 0..cur.rows {
                let xin = cur.row(r);
                let yout = out.row_mut(r);
                for o in 0..layer.out_dim {
                    let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let mut acc = layer.biases[o];
                    for (w, v) in wrow.iter().zip(xin) {
                        acc += w * v;
                    }
                    yout[o] = match layer.activation {
                        Activation::Tanh => acc.tanh(),
                        Activation::Identity => acc,
                    };
                }
            }
            tape.outputs.push(out);
        }
        Ok(tape)
    }

    /// Propagate `dout` (gradient w.r.t. this net's output) back to the input,
    /// accumulating parameter gradients into `grads`.
    fn backward(&self, tape: &MlpTape, dout: &Mat, grads: &mut MlpGrads) -> Mat {
        let mut dcur = dout.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let y = &tape.outputs[li];
            let x = if li == 0 { &tape.input } else { &tape.outputs[li - 1] };
            // Gradient w.r.t. the pre-activation of this layer.
            let mut dz = dcur;
            if layer.activation == Activation::Tanh {
                for r in 0..dz.rows {
                    let yr = y.row(r);
                    for (g, yo) in dz.row_mut(r).iter_mut().zip(yr) {
                        *g *= 1.0 - yo * yo;
                    }
                }
            }
            let dw = &mut grads.weights[li];
            let db = &mut grads.biases[li];
            let mut dx = Mat::zeros(x.rows, layer.in_dim);
            for r in 0..dz.rows {
                let dzr = dz.row(r);
                let xr = x.row(r);
                let dxr = dx.row_mut(r);
                for o in 0..layer.out_dim {
                    let g = dzr[o];
                    db[o] += g;
                    let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let dwrow = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for i in 0..layer.in_dim {
                        dwrow[i] += g * xr[i];
                        dxr[i] += g * wrow[i];
                    }
                }
            }
            dcur = dx;
        }
        dcur
    }
}

/// Which head a forward pass runs through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Source classifier; outputs a softmax row per sample.
    Classifier,
    /// Domain discriminator; outputs one logistic probability per sample.
    Domain,
    /// Cluster classifier; outputs one logistic probability per sample.
    Cluster,
}

/// Which sub-network a flat parameter index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubNet {
    Feature,
    Classifier,
    Domain,
    Cluster,
}

const SUBNETS: [SubNet; 4] = [SubNet::Feature, SubNet::Classifier, SubNet::Domain, SubNet::Cluster];

/// Network architecture. The defaults are the desk-scale shape used by the
/// trainer: two tanh hidden layers of 64 units, a 16-wide tanh feature layer,
/// and single linear heads.
#[derive(Debug, Clone)]
pub struct NetConfig {
    pub input_dim: usize,
    pub class_count: usize,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub feature_dim: usize,
}

impl NetConfig {
    pub fn new(input_dim: usize, class_count: usize) -> Self {
        Self { input_dim, class_count, hidden_dim: 64, hidden_layers: 2, feature_dim: 16 }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.class_count == 0 || self.hidden_dim == 0 || self.feature_dim == 0
        {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Record of a forward pass; consumed by [`NetworkParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTape {
    head: Head,
    feature: MlpTape,
    head_tape: MlpTape,
    /// Classifier head: softmax rows. Domain/cluster heads: one column of
    /// logistic probabilities.
    pub probs: Mat,
    version: u64,
}

impl ForwardTape {
    pub fn logits(&self) -> &Mat {
        self.head_tape.output()
    }

    pub fn features(&self) -> &Mat {
        self.feature.output()
    }
}

/// Multiplies gradients flowing into the feature extractor by -lambda while
/// leaving the forward pass untouched.
#[derive(Debug, Clone, Copy)]
pub struct GradientReversal {
    pub lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("reversal strength {lambda} must be finite and >= 0")));
        }
        Ok(Self { lambda })
    }

    /// Identity; bit-equal to the input.
    pub fn forward(&self, x: &Mat) -> Mat {
        x.clone()
    }

    pub fn backward(&self, upstream: &Mat) -> Mat {
        let mut out = upstream.clone();
        for g in &mut out.data {
            *g *= -self.lambda;
        }
        out
    }

    /// Warm-up ramp from 0 to 1 over training progress q in [0, 1].
    pub fn ramp(q: f64) -> f64 {
        2.0 / (1.0 + (-10.0 * q).exp()) - 1.0
    }
}

/// Annealed learning rate: rate(q) = gamma0 / (1 + eta * q)^alpha for
/// progress q in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub gamma0: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { gamma0: 0.01, eta: 10.0, alpha: 0.75 }
    }
}

impl LrSchedule {
    pub fn rate(&self, q: f64) -> f64 {
        self.gamma0 / (1.0 + self.eta * q).powf(self.alpha)
    }
}

/// The four sub-networks plus a parallel gradient store of identical shape.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub config: NetConfig,
    pub feature: Mlp,
    pub classifier: Mlp,
    pub domain: Mlp,
    pub cluster: Mlp,
    grads: [MlpGrads; 4],
    version: u64,
}

fn feature_dims(cfg: &NetConfig) -> Vec<usize> {
    let mut dims = vec![cfg.input_dim];
    dims.extend(std::iter::repeat(cfg.hidden_dim).take(cfg.hidden_layers));
    dims.push(cfg.feature_dim);
    dims
}

impl NetworkParams {
    /// Xavier-uniform weights, zero biases, seeded.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let dims = feature_dims(&config);
        let feature = Mlp {
            layers: dims
                .windows(2)
                .map(|w| DenseLayer::xavier(w[0], w[1], Activation::Tanh, &mut rng))
                .collect(),
        };
        let classifier = Mlp {
            layers: vec![DenseLayer::xavier(config.feature_dim, config.class_count, Activation::Identity, &mut rng)],
        };
        let domain = Mlp {
            layers: vec![DenseLayer::xavier(config.feature_dim, 1, Activation::Identity, &mut rng)],
        };
        let cluster = Mlp {
            layers: vec![DenseLayer::xavier(config.feature_dim, 1, Activation::Identity, &mut rng)],
        };
        let grads = [
            MlpGrads::zeros_like(&feature),
            MlpGrads::zeros_like(&classifier),
            MlpGrads::zeros_like(&domain),
            MlpGrads::zeros_like(&cluster),
        ];
        Ok(Self { config, feature, classifier, domain, cluster, grads, version: 0 })
    }

    /// All-zero parameters; heads then output exactly uniform probabilities.
    pub fn zeroed(config: NetConfig) -> Result<Self> {
        let mut p = Self::new(config, 0)?;
        for i in 0..p.param_count() {
            p.write_param(i, 0.0);
        }
        p.version += 1;
        Ok(p)
    }

    fn net(&self, s: SubNet) -> &Mlp {
        match s {
            SubNet::Feature => &self.feature,
            SubNet::Classifier => &self.classifier,
            SubNet::Domain => &self.domain,
            SubNet::Cluster => &self.cluster,
        }
    }

    fn net_mut(&mut self, s: SubNet) -> &mut Mlp {
        match s {
            SubNet::Feature => &mut self.feature,
            SubNet::Classifier => &mut self.classifier,
            SubNet::Domain => &mut self.domain,
            SubNet::Cluster => &mut self.cluster,
        }
    }

    fn grads_of(&self, s: SubNet) -> &MlpGrads {
        &self.grads[SUBNETS.iter().position(|&x| x == s).unwrap()]
    }

    fn grads_of_mut(&mut self, s: SubNet) -> &mut MlpGrads {
        &mut self.grads[SUBNETS.iter().position(|&x| x == s).unwrap()]
    }

    /// Run one head on a batch. Softmax rows for the classifier head, one
    /// logistic column for the domain and cluster heads.
    pub fn forward(&self, x: &Mat, head: Head) -> Result<ForwardTape> {
        if x.cols != self.config.input_dim {
            return Err(Error::Config(format!(
                "batch width {} does not match network input {}",
                x.cols, self.config.input_dim
            )));
        }
        let feature = self.feature.forward(x)?;
        let head_net = match head {
            Head::Classifier => &self.classifier,
            Head::Domain => &self.domain,
            Head::Cluster => &self.cluster,
        };
        let head_tape = head_net.forward(feature.output())?;
        let logits = head_tape.output();
        let probs = match head {
            Head::Classifier => softmax_rows(logits),
            Head::Domain | Head::Cluster => {
                let mut p = logits.clone();
                for v in &mut p.data {
                    *v = logistic(*v);
                }
                p
            }
        };
        Ok(ForwardTape { head, feature, head_tape, probs, version: self.version })
    }

    /// Accumulate gradients from `dlogits` (d loss / d head logits). With
    /// `reversal`, the gradient entering the feature extractor is multiplied
    /// by -lambda; head gradients are unaffected.
    pub fn backward(
        &mut self,
        tape: &ForwardTape,
        dlogits: &Mat,
        reversal: Option<&GradientReversal>,
    ) -> Result<()> {
        if tape.version != self.version {
            return Err(Error::Contract(
                "stale tape: parameters were updated after this forward pass".into(),
            ));
        }
        if dlogits.rows != tape.probs.rows || dlogits.cols != tape.probs.cols {
            return Err(Error::Contract("dlogits shape does not match forward output".into()));
        }
        let head_sub = match tape.head {
            Head::Classifier => SubNet::Classifier,
            Head::Domain => SubNet::Domain,
            Head::Cluster => SubNet::Cluster,
        };
        // Split borrows: heads and grads live in disjoint fields.
        let head_net = match tape.head {
            Head::Classifier => &self.classifier,
            Head::Domain => &self.domain,
            Head::Cluster => &self.cluster,
        };
        let gi = SUBNETS.iter().position(|&x| x == head_sub).unwrap();
        let mut dfeat = {
            let (head_grads, _) = {
                // index split to appease the borrow checker
                let grads = &mut self.grads;
                (&mut grads[gi], ())
            };
            head_net.backward(&tape.head_tape, dlogits, head_grads)
        };
        if let Some(grl) = reversal {
            dfeat = grl.backward(&dfeat);
        }
        self.feature.backward(&tape.feature, &dfeat, &mut self.grads[0]);
        Ok(())
    }

    /// One SGD step at training progress q; gradient buffers are zeroed
    /// afterwards. Fails without touching parameters if any gradient entry is
    /// non-finite.
    pub fn sgd_step(&mut self, schedule: &LrSchedule, q: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("progress {q} outside [0, 1]")));
        }
        for i in 0..self.param_count() {
            if !self.grad(i).is_finite() {
                return Err(Error::NonFiniteGradient { index: i });
            }
        }
        let rate = schedule.rate(q);
        for s in SUBNETS {
            let gi = SUBNETS.iter().position(|&x| x == s).unwrap();
            for li in 0..self.net(s).layers.len() {
                for wi in 0..self.grads[gi].weights[li].len() {
                    let g = self.grads[gi].weights[li][wi];
                    self.net_mut(s).layers[li].weights[wi] -= rate * g;
                }
                for bi in 0..self.grads[gi].biases[li].len() {
                    let g = self.grads[gi].biases[li][bi];
                    self.net_mut(s).layers[li].biases[bi] -= rate * g;
                }
            }
        }
        self.zero_grads();
        self.version += 1;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.zero();
        }
    }

    // Flat parameter access, used by optimizer checks and the finite-difference
    // oracle. Order: feature, classifier, domain, cluster; per layer weights
    // then biases.

    pub fn param_count(&self) -> usize {
        SUBNETS
            .iter()
            .map(|&s| {
                self.net(s).layers.iter().map(|l| l.weights.len() + l.biases.len()).sum::<usize>()
            })
            .sum()
    }

    /// Flat index range covered by one sub-network.
    pub fn block_range(&self, sub: SubNet) -> std::ops::Range<usize> {
        let mut start = 0;
        for &s in &SUBNETS {
            let len: usize =
                self.net(s).layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
            if s == sub {
                return start..start + len;
            }
            start += len;
        }
        unreachable!()
    }

    pub fn block_of(&self, index: usize) -> SubNet {
        for &s in &SUBNETS {
            if self.block_range(s).contains(&index) {
                return s;
            }
        }
        panic!("parameter index {index} out of range");
    }

    fn locate(&self, mut index: usize) -> (SubNet, usize, bool, usize) {
        for &s in &SUBNETS {
            for (li, layer) in self.net(s).layers.iter().enumerate() {
                if index < layer.weights.len() {
                    return (s, li, true, index);
                }
                index -= layer.weights.len();
                if index < layer.biases.len() {
                    return (s, li, false, index);
                }
                index -= layer.biases.len();
            }
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, index: usize) -> f64 {
        let (s, li, is_w, i) = self.locate(index);
        let layer = &self.net(s).layers[li];
        if is_w {
            layer.weights[i]
        } else {
            layer.biases[i]
        }
    }

    fn write_param(&mut self, index: usize, value: f64) {
        let (s, li, is_w, i) = self.locate(index);
        let layer = &mut self.net_mut(s).layers[li];
        if is_w {
            layer.weights[i] = value;
        } else {
            layer.biases[i] = value;
        }
    }

    /// Set one parameter. Invalidates outstanding tapes.
    pub fn set_param(&mut self, index: usize, value: f64) {
        self.write_param(index, value);
        self.version += 1;
    }

    pub fn grad(&self, index: usize) -> f64 {
        let (s, li, is_w, i) = self.locate(index);
        let g = self.grads_of(s);
        if is_w {
            g.weights[li][i]
        } else {
            g.biases[li][i]
        }
    }

    pub fn grad_vec(&self) -> Vec<f64> {
        (0..self.param_count()).map(|i| self.grad(i)).collect()
    }

    /// Add `value` to one gradient entry; used by tests to stage updates.
    pub fn add_grad(&mut self, index: usize, value: f64) {
        let (s, li, is_w, i) = self.locate(index);
        let g = self.grads_of_mut(s);
        if is_w {
            g.weights[li][i] += value;
        } else {
            g.biases[li][i] += value;
        }
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &Mat) -> Mat {
    let mut out = Mat::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        let row = logits.row(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let orow = out.row_mut(r);
        let mut sum = 0.0;
        for (o, z) in orow.iter_mut().zip(row) {
            *o = (z - m).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    out
}

/// Row-wise log-softmax; used for stable cross-entropy values.
pub fn log_softmax_rows(logits: &Mat) -> Mat {
    let mut out = Mat::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        let row = logits.row(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for z in row {
            sum += (z - m).exp();
        }
        let lse = m + sum.ln();
        for (o, z) in out.row_mut(r).iter_mut().zip(row) {
            *o = z - lse;
        }
    }
    out
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_input() -> Mat {
        Mat::from_rows(&[vec![0.3, -0.7], vec![1.5, 0.2]]).unwrap()
    }

    #[test]
    fn zero_network_predicts_uniformly() {
        let p = NetworkParams::zeroed(NetConfig::new(2, 8)).unwrap();
        let tape = p.forward(&probe_input(), Head::Classifier).unwrap();
        for r in 0..tape.probs.rows {
            for &v in tape.probs.row(r) {
                assert_eq!(v, 1.0 / 8.0);
            }
        }
        let dom = p.forward(&probe_input(), Head::Domain).unwrap();
        assert_eq!(dom.probs.data, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = NetworkParams::new(NetConfig::new(2, 5), 77).unwrap();
        let tape = p.forward(&probe_input(), Head::Classifier).unwrap();
        for r in 0..tape.probs.rows {
            let s: f64 = tape.probs.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
            assert!(tape.probs.row(r).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let p = NetworkParams::new(NetConfig::new(3, 4), 1).unwrap();
        let err = p.forward(&probe_input(), Head::Classifier).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn backward_rejects_stale_tape() {
        let mut p = NetworkParams::new(NetConfig::new(2, 4), 1).unwrap();
        let tape = p.forward(&probe_input(), Head::Classifier).unwrap();
        p.set_param(0, 0.123);
        let d = Mat::zeros(2, 4);
        let err = p.backward(&tape, &d, None).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn single_linear_layer_gradients_are_exact() {
        // One identity layer: y = Wx + b, loss = sum(y). dW = sum_n x, db = n.
        let mut p = NetworkParams::new(NetConfig::new(2, 4), 5).unwrap();
        p.feature = Mlp { layers: vec![DenseLayer::zeroed(2, 2, Activation::Identity)] };
        p.feature.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        p.classifier = Mlp { layers: vec![DenseLayer::zeroed(2, 4, Activation::Identity)] };
        p.grads = [
            MlpGrads::zeros_like(&p.feature),
            MlpGrads::zeros_like(&p.classifier),
            MlpGrads::zeros_like(&p.domain),
            MlpGrads::zeros_like(&p.cluster),
        ];
        p.version += 1;
        let x = probe_input();
        let tape = p.forward(&x, Head::Classifier).unwrap();
        let mut d = Mat::zeros(2, 4);
        d.data.iter_mut().for_each(|v| *v = 1.0);
        p.backward(&tape, &d, None).unwrap();
        // Classifier weight grads: each output unit sees sum over samples of x.
        let g = p.grads_of(SubNet::Classifier);
        for o in 0..4 {
            assert_eq!(g.weights[0][o * 2], 0.3 + 1.5);
            assert_eq!(g.weights[0][o * 2 + 1], -0.7 + 0.2);
            assert_eq!(g.biases[0][o], 2.0);
        }
        // Feature (identity passthrough) weight grads: dfeat = sum over the 4
        // zero-weight output units of their weight rows = 0.
        let gf = p.grads_of(SubNet::Feature);
        assert!(gf.weights[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversal_forward_is_identity_and_backward_flips() {
        let grl = GradientReversal::new(0.7).unwrap();
        let x = probe_input();
        assert_eq!(grl.forward(&x), x);
        let up = Mat::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let down = grl.backward(&up);
        assert_eq!(down.data, vec![-0.7, 1.4]);
    }

    #[test]
    fn reversal_ramp_spans_zero_to_one() {
        assert_eq!(GradientReversal::ramp(0.0), 0.0);
        assert!((GradientReversal::ramp(1.0) - 0.9999092042625951).abs() < 1e-15);
        assert!(GradientReversal::ramp(0.3) > 0.0 && GradientReversal::ramp(0.3) < 1.0);
    }

    #[test]
    fn schedule_matches_direct_evaluation() {
        let s = LrSchedule::default();
        assert_eq!(s.rate(0.0), 0.01);
        // 0.01 / 11^0.75, evaluated independently.
        assert!((s.rate(1.0) - 1.6556e-3).abs() < 1e-7, "rate(1) = {}", s.rate(1.0));
        assert!(s.rate(0.5) < s.rate(0.25));
    }

    #[test]
    fn sgd_step_applies_rate_and_zeroes_grads() {
        let mut p = NetworkParams::new(NetConfig::new(2, 4), 9).unwrap();
        let before = p.param(3);
        p.add_grad(3, 2.0);
        p.sgd_step(&LrSchedule::default(), 0.0).unwrap();
        assert_eq!(p.param(3), before - 0.01 * 2.0);
        assert!(p.grad_vec().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sgd_step_aborts_on_non_finite_gradient() {
        let mut p = NetworkParams::new(NetConfig::new(2, 4), 9).unwrap();
        let before = p.param(0);
        p.add_grad(7, f64::NAN);
        let err = p.sgd_step(&LrSchedule::default(), 0.0).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 7 }));
        assert_eq!(p.param(0), before);
    }

    #[test]
    fn identical_seeds_give_identical_parameters() {
        let a = NetworkParams::new(NetConfig::new(2, 8), 42).unwrap();
        let b = NetworkParams::new(NetConfig::new(2, 8), 42).unwrap();
        for i in 0..a.param_count() {
            assert_eq!(a.param(i), b.param(i));
        }
    }

    #[test]
    fn xavier_bounds_hold_and_biases_are_zero() {
        let p = NetworkParams::new(NetConfig::new(2, 8), 4).unwrap();
        let limit0 = (6.0_f64 / (2.0 + 64.0)).sqrt();
        for &w in &p.feature.layers[0].weights {
            assert!(w.abs() <= limit0);
        }
        for layer in p.feature.layers.iter().chain(p.classifier.layers.iter()) {
            assert!(layer.biases.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn golden_probe_stays_stable() {
        // Pinned output of the seed-42 network on a fixed probe; guards any
        // accidental change to init order, mixing constants or forward math.
        let p = NetworkParams::new(NetConfig::new(2, 4), 42).unwrap();
        let x = Mat::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let tape = p.forward(&x, Head::Classifier).unwrap();
        let got: Vec<f64> = tape.probs.row(0).to_vec();
        let want = golden_probe_values();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-15, "got {got:?}, want {want:?}");
        }
    }

    // Recorded from the first verified build; see golden_probe_stays_stable.
    fn golden_probe_values() -> [f64; 4] {
        [
            0.2913424519306119,
            0.16823814855195507,
            0.2773437532195768,
            0.2630756462978561,
        ]
    }

    #[test]
    fn param_roundtrip_covers_every_index() {
        let mut p = NetworkParams::new(NetConfig::new(2, 3), 8).unwrap();
        let n = p.param_count();
        for i in 0..n {
            p.set_param(i, i as f64);
        }
        for i in 0..n {
            assert_eq!(p.param(i), i as f64);
        }
        let blocks: usize = [SubNet::Feature, SubNet::Classifier, SubNet::Domain, SubNet::Cluster]
            .iter()
            .map(|&s| p.block_range(s).len())
            .sum();
        assert_eq!(blocks, n);
    }
}
