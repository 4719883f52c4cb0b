//! Top-k feature selection by sensitivity analysis or mutual information.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::net::TrainedNetwork;
use crate::sparse::FeatureMatrix;
use crate::transform::SignMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMethod {
    /// Unsupervised: RMS input gradient per output node, max over nodes.
    Sensitivity,
    /// Supervised: mutual information between sign features and labels.
    MutualInformation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScores {
    pub scores: Vec<f64>,
    pub method: SelectionMethod,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    pub k: usize,
}

/// Sensitivity scores: `max_n sqrt(mean_j (d o_n / d i_k)^2)`.
///
/// The input gradient of output `n` on instance `j` is `W1 d_jn` for the
/// first-layer delta `d_jn`, so the mean squared gradient of feature `k`
/// is the quadratic form `w_k' M_n w_k / J` with `M_n = sum_j d_jn d_jn'`.
/// This avoids materializing `J x K` gradients per output node.
pub fn sensitivity_scores(net: &TrainedNetwork, inputs: &FeatureMatrix) -> Result<FeatureScores> {
    let j_count = inputs.n_rows();
    if j_count == 0 {
        return Err(Error::Empty("sensitivity analysis input"));
    }
    if inputs.n_features != net.n_inputs() {
        return Err(Error::Shape("input width differs from network".into()));
    }
    let h = net.layers[0].n_out;
    let n_out = net.n_classes();

    // Fixed-size chunks summed in order keep the result schedule-independent.
    let partials: Vec<Vec<Vec<f64>>> = inputs
        .rows
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = vec![vec![0.0; h * h]; n_out];
            for row in chunk {
                for (m, d) in acc.iter_mut().zip(&net.first_layer_deltas(row)) {
                    outer_add(m, d);
                }
            }
            acc
        })
        .collect();
    let mut second_moments = vec![vec![0.0; h * h]; n_out];
    for part in &partials {
        for (x, y) in second_moments.iter_mut().zip(part) {
            x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
        }
    }

    let w1 = &net.layers[0];
    let scores = (0..inputs.n_features)
        .into_par_iter()
        .map(|k| {
            let w = &w1.weights[k * h..(k + 1) * h];
            second_moments
                .iter()
                .map(|m| {
                    let mut q = 0.0;
                    for (a, wa) in w.iter().enumerate() {
                        let row = &m[a * h..(a + 1) * h];
                        q += wa * row.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
                    }
                    (q.max(0.0) / j_count as f64).sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(FeatureScores {
        scores,
        method: SelectionMethod::Sensitivity,
    })
}

fn outer_add(m: &mut [f64], d: &[f64]) {
    let h = d.len();
    for (a, &da) in d.iter().enumerate() {
        if da != 0.0 {
            for (x, &db) in m[a * h..(a + 1) * h].iter_mut().zip(d) {
                *x += da * db;
            }
        }
    }
}

/// Plug-in mutual information (nats) of a contingency table of counts.
pub fn mutual_information(table: &[Vec<usize>]) -> f64 {
    let n: usize = table.iter().flatten().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|c| table.iter().map(|r| r.get(c).copied().unwrap_or(0)).sum::<usize>() as f64)
        .collect();
    let mut mi = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            if count > 0 {
                let joint = count as f64;
                mi += joint / n * (joint * n / (row_sums[r] * col_sums[c])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Mutual information between each sign feature and the labels.
pub fn mutual_information_scores(
    signs: &SignMatrix,
    labels: &[usize],
    n_classes: usize,
) -> Result<FeatureScores> {
    if labels.len() != signs.n_rows() {
        return Err(Error::Shape("one label per sign row required".into()));
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(Error::Shape("label index out of range".into()));
    }
    let k = signs.matrix.n_features;
    let mut class_totals = vec![0usize; n_classes];
    for &l in labels {
        class_totals[l] += 1;
    }
    // counts[feature][0 = -1, 1 = +1][class]; zeros are the remainder.
    let mut counts = vec![[0usize; 2]; k * n_classes];
    for (row, &y) in signs.matrix.rows.iter().zip(labels) {
        for (f, v) in row.iter() {
            let slot = if v < 0.0 { 0 } else { 1 };
            counts[f * n_classes + y][slot] += 1;
        }
    }
    let scores = (0..k)
        .into_par_iter()
        .map(|f| {
            let mut table = vec![vec![0usize; n_classes]; 3];
            for y in 0..n_classes {
                let [neg, pos] = counts[f * n_classes + y];
                table[0][y] = neg;
                table[2][y] = pos;
                table[1][y] = class_totals[y] - neg - pos;
            }
            mutual_information(&table)
        })
        .collect();
    Ok(FeatureScores {
        scores,
        method: SelectionMethod::MutualInformation,
    })
}

/// Indices of the `k` best scores, descending, ties to the lower index.
pub fn select_top_k(scores: &FeatureScores, k: usize) -> Result<SelectionResult> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let total = scores.scores.len();
    if k > total {
        warn!("requested {k} features but only {total} exist; keeping all");
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .total_cmp(&scores.scores[a])
            .then(a.cmp(&b))
    });
    order.truncate(k.min(total));
    Ok(SelectionResult { indices: order, k })
}

impl SelectionResult {
    /// `index<TAB>term<TAB>score` per selected feature.
    pub fn to_tsv(&self, scores: &FeatureScores, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for &i in &self.indices {
            let _ = writeln!(out, "{i}\t{}\t{:?}", vocab.term(i), scores.scores[i]);
        }
        out
    }

    pub fn save(&self, path: &Path, scores: &FeatureScores, vocab: &Vocabulary) -> Result<()> {
        fs::write(path, self.to_tsv(scores, vocab)).map_err(|e| Error::io(path, e))
    }

    /// Reads back the selected indices (and their scores) from a TSV export.
    pub fn load(path: &Path) -> Result<(SelectionResult, Vec<f64>)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let mut parts = line.split('\t');
            let (Some(i), Some(_), Some(s), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::format("selection", format!("bad line {line:?}")));
            };
            indices.push(
                i.parse()
                    .map_err(|_| Error::format("selection", format!("bad index {i:?}")))?,
            );
            values.push(
                s.parse()
                    .map_err(|_| Error::format("selection", format!("bad score {s:?}")))?,
            );
        }
        let k = indices.len();
        Ok((SelectionResult { indices, k }, values))
    }
}
