//! Feedforward ReLU classifier with a softmax output, trained with
//! mini-batch Adam on sparse inputs, plus exact input gradients.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{FeatureMatrix, SparseRow};

pub const CHECKPOINT_MAGIC: &str = "GRADRULES-NET v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: vec![100, 100],
            epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(self.learning_rate) || !finite_pos(self.epsilon) {
            return Err(Error::Config("learning rate and epsilon must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Fully connected layer, weights stored input-major (`w[i * n_out + o]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn he(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std");
        let weights = (0..n_in * n_out).map(|_| normal.sample(rng)).collect();
        Layer {
            n_in,
            n_out,
            weights,
            bias: vec![0.0; n_out],
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_out..(i + 1) * self.n_out]
    }

    fn forward_sparse(&self, x: &SparseRow) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, v) in x.iter() {
            for (zo, w) in z.iter_mut().zip(self.row(i)) {
                *zo += v * w;
            }
        }
        z
    }

    fn forward_dense(&self, a: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, &v) in a.iter().enumerate() {
            if v != 0.0 {
                for (zo, w) in z.iter_mut().zip(self.row(i)) {
                    *zo += v * w;
                }
            }
        }
        z
    }

    /// `W · g`: propagates an output-side gradient back to the inputs.
    fn backward(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n_in)
            .map(|i| self.row(i).iter().zip(g).map(|(w, g)| w * g).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub class: usize,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

/// Pre-activations of every layer for one input.
struct Trace {
    pre: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    pub layers: Vec<Layer>,
    pub config: NetworkConfig,
}

impl TrainedNetwork {
    /// Network with every weight and bias zero (constant uniform output).
    pub fn zeros(n_inputs: usize, config: NetworkConfig, n_classes: usize) -> Self {
        let sizes = layer_sizes(n_inputs, &config.hidden, n_classes);
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        TrainedNetwork { layers, config }
    }

    /// He-initialized network (normal, std `sqrt(2 / fan_in)`, zero biases).
    pub fn initialize(n_inputs: usize, config: NetworkConfig, n_classes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sizes = layer_sizes(n_inputs, &config.hidden, n_classes);
        let layers = sizes
            .windows(2)
            .map(|w| Layer::he(w[0], w[1], &mut rng))
            .collect();
        TrainedNetwork { layers, config }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("at least one layer").n_out
    }

    fn trace(&self, x: &SparseRow) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut z = self.layers[0].forward_sparse(x);
        for layer in &self.layers[1..] {
            let a = relu(&z);
            pre.push(z);
            z = layer.forward_dense(&a);
        }
        let probabilities = softmax(&z);
        pre.push(z);
        Trace { pre, probabilities }
    }

    pub fn predict(&self, x: &SparseRow) -> Prediction {
        let probabilities = self.trace(x).probabilities;
        let class = argmax(&probabilities);
        Prediction {
            probabilities,
            class,
        }
    }

    pub fn predict_all(&self, m: &FeatureMatrix) -> Vec<usize> {
        m.rows.par_iter().map(|r| self.predict(r).class).collect()
    }

    /// Backpropagates a gradient on the logits down to the first layer's
    /// pre-activations.
    fn backprop_to_first(&self, trace: &Trace, logit_grad: Vec<f64>) -> Vec<f64> {
        let mut g = logit_grad;
        for l in (1..self.layers.len()).rev() {
            let mut ga = self.layers[l].backward(&g);
            for (gi, zi) in ga.iter_mut().zip(&trace.pre[l - 1]) {
                if *zi <= 0.0 {
                    *gi = 0.0;
                }
            }
            g = ga;
        }
        g
    }

    /// Gradient of softmax output `n` with respect to the first layer's
    /// pre-activations. The input gradient is the first weight matrix
    /// applied to this vector, so callers that need only a few input
    /// coordinates can avoid the dense `K`-vector.
    pub fn first_layer_delta(&self, x: &SparseRow, output: usize) -> Vec<f64> {
        let trace = self.trace(x);
        let p = &trace.probabilities;
        let logit_grad = (0..p.len())
            .map(|j| p[output] * (f64::from(u8::from(j == output)) - p[j]))
            .collect();
        self.backprop_to_first(&trace, logit_grad)
    }

    /// First-layer deltas for every output node, in output order.
    pub fn first_layer_deltas(&self, x: &SparseRow) -> Vec<Vec<f64>> {
        let trace = self.trace(x);
        let p = &trace.probabilities;
        (0..p.len())
            .map(|n| {
                let logit_grad = (0..p.len())
                    .map(|j| p[n] * (f64::from(u8::from(j == n)) - p[j]))
                    .collect();
                self.backprop_to_first(&trace, logit_grad)
            })
            .collect()
    }

    /// `d(output n probability) / d(input k)` given a first-layer delta.
    #[inline]
    pub fn gradient_at(&self, delta: &[f64], k: usize) -> f64 {
        self.layers[0].row(k).iter().zip(delta).map(|(w, d)| w * d).sum()
    }

    /// Dense gradient of softmax output `output` with respect to every input.
    pub fn input_gradient(&self, x: &SparseRow, output: usize) -> Vec<f64> {
        assert!(output < self.n_classes(), "output index out of range");
        let delta = self.first_layer_delta(x, output);
        self.layers[0].backward(&delta)
    }

    fn check_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Checkpoint encoding: magic line, `key=value` config lines, a `---`
    /// line, then every layer's weights and biases as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let sizes: Vec<String> = std::iter::once(self.n_inputs())
            .chain(self.layers.iter().map(|l| l.n_out))
            .map(|s| s.to_string())
            .collect();
        let mut head = String::new();
        let _ = writeln!(head, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(head, "layers={}", sizes.join(","));
        let _ = writeln!(head, "epochs={}", c.epochs);
        let _ = writeln!(head, "learning_rate={:?}", c.learning_rate);
        let _ = writeln!(head, "beta1={:?}", c.beta1);
        let _ = writeln!(head, "beta2={:?}", c.beta2);
        let _ = writeln!(head, "epsilon={:?}", c.epsilon);
        let _ = writeln!(head, "batch_size={}", c.batch_size);
        let _ = writeln!(head, "seed={}", c.seed);
        head.push_str("---\n");
        let mut out = head.into_bytes();
        for layer in &self.layers {
            for v in layer.weights.iter().chain(&layer.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "network checkpoint";
        let sep = b"\n---\n";
        let split = bytes
            .windows(sep.len())
            .position(|w| w == sep)
            .ok_or_else(|| Error::format(WHAT, "missing config terminator"))?;
        let head = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::format(WHAT, "config block is not utf-8"))?;
        let body = &bytes[split + sep.len()..];
        let mut lines = head.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::format(WHAT, "bad magic"));
        }
        let mut sizes: Vec<usize> = Vec::new();
        let mut config = NetworkConfig::default();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(WHAT, format!("bad line {line:?}")))?;
            let bad = || Error::format(WHAT, format!("bad value for {k}"));
            match k {
                "layers" => {
                    sizes = v
                        .split(',')
                        .map(|s| s.parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                }
                "epochs" => config.epochs = v.parse().map_err(|_| bad())?,
                "learning_rate" => config.learning_rate = v.parse().map_err(|_| bad())?,
                "beta1" => config.beta1 = v.parse().map_err(|_| bad())?,
                "beta2" => config.beta2 = v.parse().map_err(|_| bad())?,
                "epsilon" => config.epsilon = v.parse().map_err(|_| bad())?,
                "batch_size" => config.batch_size = v.parse().map_err(|_| bad())?,
                "seed" => config.seed = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::format(WHAT, format!("unknown key {k:?}"))),
            }
        }
        if sizes.len() < 3 {
            return Err(Error::format(WHAT, "need input, hidden and output sizes"));
        }
        config.hidden = sizes[1..sizes.len() - 1].to_vec();
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if body.len() != expected * 8 {
            return Err(Error::format(
                WHAT,
                format!("expected {} parameter bytes, found {}", expected * 8, body.len()),
            ));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let mut layer = Layer::zeros(w[0], w[1]);
            layer.weights.iter_mut().for_each(|x| *x = values.next().unwrap());
            layer.bias.iter_mut().for_each(|x| *x = values.next().unwrap());
            layers.push(layer);
        }
        let net = TrainedNetwork { layers, config };
        if !net.check_finite() {
            return Err(Error::format(WHAT, "non-finite parameter"));
        }
        Ok(net)
    }
}

fn layer_sizes(n_inputs: usize, hidden: &[usize], n_classes: usize) -> Vec<usize> {
    std::iter::once(n_inputs)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(n_classes))
        .collect()
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(net: &TrainedNetwork) -> Self {
        let shapes: Vec<usize> = net
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut TrainedNetwork, grads: &[Vec<f64>]) {
        let c = net.config.clone();
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let params = net
            .layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias]);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            p.par_chunks_mut(4096)
                .zip(g.par_chunks(4096))
                .zip(m.par_chunks_mut(4096))
                .zip(v.par_chunks_mut(4096))
                .for_each(|(((p, g), m), v)| {
                    for i in 0..p.len() {
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                        let mh = m[i] / bc1;
                        let vh = v[i] / bc2;
                        p[i] -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
                    }
                });
        }
    }
}

/// Trains with mini-batch Adam on the mean cross-entropy loss.
///
/// The per-epoch shuffle comes from a generator seeded with
/// `config.seed`, and gradients are accumulated in a fixed order, so the
/// result is bit-reproducible.
pub fn train_network(
    train: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    config: &NetworkConfig,
) -> Result<TrainedNetwork> {
    config.validate()?;
    if n_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if labels.len() != train.n_rows() {
        return Err(Error::Shape("one label per training row required".into()));
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(Error::Shape("label index out of range".into()));
    }
    if train.n_rows() == 0 {
        return Err(Error::Empty("training matrix"));
    }

    let mut net = TrainedNetwork::initialize(train.n_features, config.clone(), n_classes);
    let mut adam = Adam::new(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    let mut grads: Vec<Vec<f64>> = net
        .layers
        .iter()
        .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
        .collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| g.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &j in batch {
                epoch_loss += accumulate_example(&net, &train.rows[j], labels[j], scale, &mut grads);
            }
            adam.step(&mut net, &grads);
        }
        if !epoch_loss.is_finite() || !net.check_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        log::debug!(
            "epoch {epoch}: mean loss {:.6}",
            epoch_loss / train.n_rows() as f64
        );
    }
    Ok(net)
}

/// Adds `scale` times the cross-entropy gradient of one example into
/// `grads` and returns its loss.
fn accumulate_example(
    net: &TrainedNetwork,
    x: &SparseRow,
    label: usize,
    scale: f64,
    grads: &mut [Vec<f64>],
) -> f64 {
    let trace = net.trace(x);
    let p = &trace.probabilities;
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let mut g: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| scale * (pj - f64::from(u8::from(j == label))))
        .collect();

    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let (gw, rest) = grads[2 * l..].split_at_mut(1);
        let gw = &mut gw[0];
        let gb = &mut rest[0];
        for (b, gi) in gb.iter_mut().zip(&g) {
            *b += gi;
        }
        if l == 0 {
            for (i, v) in x.iter() {
                let row = &mut gw[i * layer.n_out..(i + 1) * layer.n_out];
                for (w, gi) in row.iter_mut().zip(&g) {
                    *w += v * gi;
                }
            }
        } else {
            let input: Vec<f64> = relu(&trace.pre[l - 1]);
            for (i, &a) in input.iter().enumerate() {
                if a != 0.0 {
                    let row = &mut gw[i * layer.n_out..(i + 1) * layer.n_out];
                    for (w, gi) in row.iter_mut().zip(&g) {
                        *w += a * gi;
                    }
                }
            }
            let mut ga = layer.backward(&g);
            for (gi, zi) in ga.iter_mut().zip(&trace.pre[l - 1]) {
                if *zi <= 0.0 {
                    *gi = 0.0;
                }
            }
            g = ga;
        }
    }
    loss
}
