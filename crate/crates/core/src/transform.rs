//! Saliency maps, gradient-reweighed inputs and their sign reduction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::TrainedNetwork;
use crate::sparse::{FeatureMatrix, SparseRow};

/// Magnitudes at or below this are treated as zero by [`sign_reduce`].
pub const SIGN_ZERO_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaliencyMode {
    /// Gradient of the output the network predicts for the instance.
    PredictedClass,
    /// Gradient of the output belonging to the instance's gold label.
    GoldClass,
}

/// Per-instance input gradients of one chosen output node.
///
/// Only the first-layer delta of each instance is kept; a full row of
/// `K` gradients is computed on demand from it.
#[derive(Debug, Clone)]
pub struct SaliencyMap<'n> {
    net: &'n TrainedNetwork,
    pub mode: SaliencyMode,
    pub targets: Vec<usize>,
    deltas: Vec<Vec<f64>>,
}

impl<'n> SaliencyMap<'n> {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.net.n_inputs()
    }

    /// Dense gradient row `S[j, ·]`.
    pub fn row(&self, j: usize) -> Vec<f64> {
        (0..self.n_features())
            .map(|k| self.net.gradient_at(&self.deltas[j], k))
            .collect()
    }

    pub fn value(&self, j: usize, k: usize) -> f64 {
        self.net.gradient_at(&self.deltas[j], k)
    }

    /// Number of exactly zero entries over the whole `J x K` map.
    pub fn zero_count(&self) -> usize {
        (0..self.n_rows())
            .into_par_iter()
            .map(|j| {
                (0..self.n_features())
                    .filter(|&k| self.value(j, k) == 0.0)
                    .count()
            })
            .sum()
    }
}

pub fn saliency_map<'n>(
    net: &'n TrainedNetwork,
    matrix: &FeatureMatrix,
    mode: SaliencyMode,
) -> Result<SaliencyMap<'n>> {
    if matrix.n_features != net.n_inputs() {
        return Err(Error::Shape(format!(
            "matrix has {} features, network expects {}",
            matrix.n_features,
            net.n_inputs()
        )));
    }
    let targets: Vec<usize> = match mode {
        SaliencyMode::PredictedClass => net.predict_all(matrix),
        SaliencyMode::GoldClass => matrix
            .labels
            .clone()
            .ok_or(Error::MissingLabels("gold-class saliency"))?,
    };
    if targets.iter().any(|&t| t >= net.n_classes()) {
        return Err(Error::Shape("target class outside network outputs".into()));
    }
    let deltas = matrix
        .rows
        .par_iter()
        .zip(&targets)
        .map(|(row, &t)| net.first_layer_delta(row, t))
        .collect();
    Ok(SaliencyMap {
        net,
        mode,
        targets,
        deltas,
    })
}

/// Elementwise product of inputs and saliency; sparse in the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweighedMatrix {
    pub matrix: FeatureMatrix,
    /// Nonzero inputs whose gradient was exactly zero (and so vanished).
    pub zero_gradient_inputs: usize,
}

pub fn reweigh(inputs: &FeatureMatrix, sal: &SaliencyMap<'_>) -> Result<ReweighedMatrix> {
    if inputs.n_rows() != sal.n_rows() || inputs.n_features != sal.n_features() {
        return Err(Error::Shape(format!(
            "inputs {}x{} vs saliency {}x{}",
            inputs.n_rows(),
            inputs.n_features,
            sal.n_rows(),
            sal.n_features()
        )));
    }
    let (rows, zeros): (Vec<SparseRow>, Vec<usize>) = inputs
        .rows
        .par_iter()
        .enumerate()
        .map(|(j, row)| {
            let mut out = SparseRow::new();
            let mut zeros = 0;
            for (k, x) in row.iter() {
                let v = x * sal.value(j, k);
                if v == 0.0 {
                    zeros += 1;
                } else {
                    out.indices.push(k);
                    out.values.push(v);
                }
            }
            (out, zeros)
        })
        .unzip();
    Ok(ReweighedMatrix {
        matrix: FeatureMatrix {
            rows,
            n_features: inputs.n_features,
            labels: inputs.labels.clone(),
            class_names: inputs.class_names.clone(),
        },
        zero_gradient_inputs: zeros.into_iter().sum(),
    })
}

/// Reweighing against an explicit dense gradient matrix.
pub fn reweigh_dense(inputs: &FeatureMatrix, gradients: &[Vec<f64>]) -> Result<ReweighedMatrix> {
    if inputs.n_rows() != gradients.len()
        || gradients.iter().any(|g| g.len() != inputs.n_features)
    {
        return Err(Error::Shape("gradient matrix does not match inputs".into()));
    }
    let mut zero_gradient_inputs = 0;
    let rows = inputs
        .rows
        .iter()
        .zip(gradients)
        .map(|(row, g)| {
            let pairs = row.iter().map(|(k, x)| (k, x * g[k])).collect::<Vec<_>>();
            zero_gradient_inputs += pairs.iter().filter(|(_, v)| *v == 0.0).count();
            SparseRow::from_pairs(pairs)
        })
        .collect();
    Ok(ReweighedMatrix {
        matrix: FeatureMatrix {
            rows,
            n_features: inputs.n_features,
            labels: inputs.labels.clone(),
            class_names: inputs.class_names.clone(),
        },
        zero_gradient_inputs,
    })
}

/// Sparse matrix over `{-1, 0, +1}` (zeros implicit).
#[derive(Debug, Clone, PartialEq)]
pub struct SignMatrix {
    pub matrix: FeatureMatrix,
}

impl SignMatrix {
    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn get(&self, j: usize, k: usize) -> i8 {
        self.matrix.rows[j].get(k) as i8
    }
}

pub fn sign_of(v: f64) -> i8 {
    if v > SIGN_ZERO_THRESHOLD {
        1
    } else if v < -SIGN_ZERO_THRESHOLD {
        -1
    } else {
        0
    }
}

pub fn sign_reduce(rw: &ReweighedMatrix) -> SignMatrix {
    sign_reduce_matrix(&rw.matrix)
}

/// Sign reduction of any sparse matrix (used for presence signs of the
/// original TF-IDF inputs as well).
pub fn sign_reduce_matrix(m: &FeatureMatrix) -> SignMatrix {
    let rows = m
        .rows
        .iter()
        .map(|row| {
            SparseRow::from_pairs(row.iter().map(|(k, v)| (k, f64::from(sign_of(v)))).collect())
        })
        .collect();
    SignMatrix {
        matrix: FeatureMatrix {
            rows,
            n_features: m.n_features,
            labels: m.labels.clone(),
            class_names: m.class_names.clone(),
        },
    }
}
