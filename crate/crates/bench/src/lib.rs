//! Synthetic inputs for the benchmarks.

use gradrules::{FeatureMatrix, NetworkConfig, SparseRow, TrainedNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sparse rows with about `nnz` entries each, L2-normalized, labeled
/// round-robin over `classes`.
pub fn random_matrix(rows: usize, features: usize, nnz: usize, classes: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let pairs: Vec<(usize, f64)> = (0..nnz)
            .map(|_| (rng.random_range(0..features), rng.random_range(0.1..1.0)))
            .collect();
        let mut row = SparseRow::from_pairs(pairs);
        let norm = row.norm();
        row.values.iter_mut().for_each(|v| *v /= norm);
        out.push(row);
    }
    let mut m = FeatureMatrix::new(features, (0..classes).map(|c| format!("c{c}")).collect());
    m.rows = out;
    m.labels = Some((0..rows).map(|r| r % classes).collect());
    m
}

pub fn random_network(features: usize, hidden: usize, classes: usize, seed: u64) -> TrainedNetwork {
    let config = NetworkConfig {
        hidden: vec![hidden, hidden],
        seed,
        ..NetworkConfig::default()
    };
    TrainedNetwork::initialize(features, config, classes)
}
