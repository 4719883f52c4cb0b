//! Oracles and data generators shared by the integration tests. Nothing
//! here calls the library's numerical code; the point is to check it
//! against independent implementations.
#![allow(dead_code)]

use gradrules::net::Layer;
use gradrules::ripper::{Condition, Dataset, FeatureKind};
use gradrules::{NetworkConfig, SparseRow, TrainedNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Network with uniform random weights and biases in [-1, 1].
pub fn random_network(sizes: &[usize], seed: u64) -> TrainedNetwork {
    let mut r = rng(seed);
    let hidden = sizes[1..sizes.len() - 1].to_vec();
    let config = NetworkConfig {
        hidden,
        ..NetworkConfig::default()
    };
    let mut net = TrainedNetwork::zeros(sizes[0], config, *sizes.last().unwrap());
    for layer in &mut net.layers {
        let scale = 1.0 / (layer.n_in as f64).sqrt();
        for w in &mut layer.weights {
            *w = r.random_range(-1.0..1.0) * scale * 2.0;
        }
        for b in &mut layer.bias {
            *b = r.random_range(-0.5..0.5);
        }
    }
    net
}

fn affine(layer: &Layer, a: &[f64]) -> Vec<f64> {
    (0..layer.n_out)
        .map(|o| {
            layer.bias[o]
                + (0..layer.n_in)
                    .map(|i| a[i] * layer.weights[i * layer.n_out + o])
                    .sum::<f64>()
        })
        .collect()
}

/// Plain dense forward pass: returns the hidden pre-activations of every
/// layer and the softmax output.
pub fn dense_forward(net: &TrainedNetwork, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut a = x.to_vec();
    let mut pre = Vec::new();
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        let z = affine(layer, &a);
        if l == last {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            return (pre, e.iter().map(|v| v / s).collect());
        }
        a = z.iter().map(|v| v.max(0.0)).collect();
        pre.push(z);
    }
    unreachable!()
}

/// Central finite differences of softmax output `n` with step `h`.
pub fn finite_difference(net: &TrainedNetwork, x: &[f64], n: usize, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            (dense_forward(net, &up).1[n] - dense_forward(net, &down).1[n]) / (2.0 * h)
        })
        .collect()
}

/// Smallest |pre-activation| over all hidden units; finite differences
/// are unreliable when a ReLU sits near its kink.
pub fn kink_distance(net: &TrainedNetwork, x: &[f64]) -> f64 {
    dense_forward(net, x)
        .0
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

pub fn sparse(x: &[f64]) -> SparseRow {
    SparseRow::from_pairs(x.iter().copied().enumerate().collect())
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Mutual information in nats by the textbook double sum over the joint
/// distribution.
pub fn mi_double_sum(table: &[Vec<usize>]) -> f64 {
    let total: usize = table.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64 / n).collect();
    let cols: Vec<f64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum::<usize>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi
}

/// A planted disjunction of conjunctions over discrete `{-1, 0, 1}`
/// features.
#[derive(Debug, Clone)]
pub struct PlantedDnf {
    pub n_features: usize,
    pub terms: Vec<Vec<(usize, f64)>>,
}

impl PlantedDnf {
    pub fn random(r: &mut ChaCha8Rng, n_features: usize) -> Self {
        let n_terms = r.random_range(1..=3);
        let terms = (0..n_terms)
            .map(|_| {
                let len = r.random_range(1..=2);
                let mut term: Vec<(usize, f64)> = Vec::new();
                while term.len() < len {
                    let f = r.random_range(0..n_features);
                    if term.iter().all(|&(g, _)| g != f) {
                        term.push((f, [-1.0, 0.0, 1.0][r.random_range(0..3)]));
                    }
                }
                term
            })
            .collect();
        PlantedDnf { n_features, terms }
    }

    pub fn label(&self, row: &[f64]) -> bool {
        self.terms
            .iter()
            .any(|t| t.iter().all(|&(f, v)| row[f] == v))
    }

    pub fn rows(&self, r: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..self.n_features)
                    .map(|_| [-1.0, 0.0, 1.0][r.random_range(0..3)])
                    .collect()
            })
            .collect()
    }
}

pub fn discrete_dataset(rows: &[Vec<f64>]) -> Dataset {
    let cols = rows.first().map_or(0, Vec::len);
    Dataset::new(
        rows.len(),
        rows.iter().flatten().copied().collect(),
        vec![FeatureKind::Discrete; cols],
        (0..cols).map(|c| format!("f{c}")).collect(),
        (0..cols).collect(),
    )
    .expect("valid discrete dataset")
}

pub fn covers(conditions: &[Condition], row: &[f64]) -> bool {
    conditions.iter().all(|c| c.holds(row[c.feature]))
}
