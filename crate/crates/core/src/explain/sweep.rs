use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{class_fidelity, ClassScores, FidelityReport};
use crate::error::{Error, Result};
use crate::ripper::{induce_binary, Dataset, RipperConfig, RuleSet};

/// Default min-cover ladder, capped per class at its positive count.
pub const MIN_COVER_LADDER: [usize; 7] = [2, 4, 8, 16, 32, 64, 128];

/// Cells whose F lies within this absolute distance of the best are
/// "well-performing".
pub const WELL_PERFORMING_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinCoverGrid {
    /// Explicit values; those above a class's positive count are dropped.
    Values(Vec<usize>),
    /// Every value from 2 to the class's positive count.
    Full,
}

impl Default for MinCoverGrid {
    fn default() -> Self {
        MinCoverGrid::Values(MIN_COVER_LADDER.to_vec())
    }
}

impl MinCoverGrid {
    /// Grid values for a class with `positives` target instances. Never
    /// empty: when every value exceeds the count, the count itself (at
    /// least 1) is used.
    pub fn for_class(&self, positives: usize) -> Vec<usize> {
        let values: Vec<usize> = match self {
            MinCoverGrid::Values(v) => v.iter().copied().filter(|&m| m <= positives).collect(),
            MinCoverGrid::Full => (2..=positives).collect(),
        };
        if values.is_empty() {
            vec![positives.max(1)]
        } else {
            values
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub class: usize,
    pub seed: u64,
    pub min_cover: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone)]
pub struct ClassSweep {
    pub class: usize,
    pub best: SweepCell,
    pub best_ruleset: RuleSet,
    /// Population standard deviation of F across this class's cells.
    pub f_std: f64,
    /// Cells within [`WELL_PERFORMING_MARGIN`] of the best F, best first.
    pub well_performing: Vec<(SweepCell, RuleSet)>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// All cells, sorted by (class, seed, min_cover).
    pub cells: Vec<SweepCell>,
    pub classes: Vec<ClassSweep>,
    /// Fidelity of the per-class best rule-sets.
    pub report: FidelityReport,
}

fn better(a: &SweepCell, b: &SweepCell) -> bool {
    a.f_score > b.f_score
        || (a.f_score == b.f_score
            && (a.min_cover, a.seed) < (b.min_cover, b.seed))
}

/// Exhaustive (seed x min_cover) grid per class.
///
/// Cells run in parallel on the current rayon pool; results are collected
/// in job order, so the outcome does not depend on scheduling.
pub fn sweep(
    data: &Dataset,
    targets: &[usize],
    class_names: &[String],
    seeds: &[u64],
    grid: &MinCoverGrid,
    base: &RipperConfig,
) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::Config("seed grid is empty".into()));
    }
    if let MinCoverGrid::Values(v) = grid {
        if v.is_empty() || v.contains(&0) {
            return Err(Error::Config("min-cover grid must be nonempty and positive".into()));
        }
    }
    if targets.len() != data.n_rows() {
        return Err(Error::Shape("one target per row required".into()));
    }

    let mut jobs = Vec::new();
    for class in 0..class_names.len() {
        let positives = targets.iter().filter(|&&t| t == class).count();
        let covers = grid.for_class(positives);
        for &seed in seeds {
            for &min_cover in &covers {
                jobs.push((class, seed, min_cover));
            }
        }
    }
    jobs.sort_unstable();

    let results: Vec<(SweepCell, RuleSet)> = jobs
        .par_iter()
        .map(|&(class, seed, min_cover)| {
            let config = RipperConfig {
                seed,
                min_cover,
                ..*base
            };
            let positives: Vec<bool> = targets.iter().map(|&t| t == class).collect();
            let mut rs = induce_binary(data, &positives, &config)?;
            rs.class = class_names[class].clone();
            rs.default = "others".to_string();
            let s = class_fidelity(&rs, data, targets, class);
            let cell = SweepCell {
                class,
                seed,
                min_cover,
                precision: s.precision,
                recall: s.recall,
                f_score: s.f_score,
            };
            Ok((cell, rs))
        })
        .collect::<Result<_>>()?;

    let mut classes = Vec::with_capacity(class_names.len());
    for class in 0..class_names.len() {
        let own: Vec<&(SweepCell, RuleSet)> =
            results.iter().filter(|(c, _)| c.class == class).collect();
        let (best_cell, best_rs) = own
            .iter()
            .copied()
            .reduce(|a, b| if better(&b.0, &a.0) { b } else { a })
            .expect("every class has at least one cell");
        let fs: Vec<f64> = own.iter().map(|(c, _)| c.f_score).collect();
        let mean = fs.iter().sum::<f64>() / fs.len() as f64;
        let f_std = (fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / fs.len() as f64).sqrt();
        let mut well: Vec<(SweepCell, RuleSet)> = own
            .iter()
            .filter(|(c, _)| c.f_score >= best_cell.f_score - WELL_PERFORMING_MARGIN)
            .map(|&(c, r)| (*c, r.clone()))
            .collect();
        well.sort_by(|a, b| {
            if better(&a.0, &b.0) {
                std::cmp::Ordering::Less
            } else if better(&b.0, &a.0) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        classes.push(ClassSweep {
            class,
            best: *best_cell,
            best_ruleset: best_rs.clone(),
            f_std,
            well_performing: well,
        });
    }

    let per_class = classes
        .iter()
        .map(|c| ClassScores {
            class: class_names[c.class].clone(),
            precision: c.best.precision,
            recall: c.best.recall,
            f_score: c.best.f_score,
            support: targets.iter().filter(|&&t| t == c.class).count(),
        })
        .collect();
    Ok(SweepResult {
        cells: results.into_iter().map(|(c, _)| c).collect(),
        classes,
        report: FidelityReport::from_classes(per_class),
    })
}

impl SweepResult {
    /// `class,seed,min_cover,P,R,F` rows with a header line.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("class,seed,min_cover,P,R,F\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{:?},{:?},{:?}",
                class_names[c.class], c.seed, c.min_cover, c.precision, c.recall, c.f_score
            );
        }
        out
    }

    pub fn best_rulesets(&self) -> Vec<RuleSet> {
        self.classes.iter().map(|c| c.best_ruleset.clone()).collect()
    }
}
