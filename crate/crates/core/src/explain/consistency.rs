use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use super::sweep::SweepResult;
use crate::error::{Error, Result};
use crate::ripper::{Condition, Dataset, RuleSet};

type RuleKey = BTreeSet<Condition>;

fn rule_keys(rs: &RuleSet) -> BTreeSet<RuleKey> {
    rs.rules
        .iter()
        .map(|r| r.conditions.iter().copied().collect())
        .collect()
}

/// Mean percentage of `best`'s rules that occur verbatim (as unordered
/// condition sets) in each other rule-set. Partial overlaps count as
/// mismatches. An empty `others` list scores 100.
pub fn rule_match(best: &RuleSet, others: &[RuleSet]) -> f64 {
    if others.is_empty() {
        return 100.0;
    }
    let best_keys = rule_keys(best);
    if best_keys.is_empty() {
        warn!("rule match against an empty best rule-set");
        return if others.iter().all(|o| o.rules.is_empty()) {
            100.0
        } else {
            0.0
        };
    }
    let total: f64 = others
        .iter()
        .map(|o| {
            let keys = rule_keys(o);
            best_keys.intersection(&keys).count() as f64 / best_keys.len() as f64 * 100.0
        })
        .sum();
    total / others.len() as f64
}

/// Mean percentage of rows on which each other rule-set makes the same
/// binary decision (rule fires or default) as `best`.
pub fn classification_overlap(best: &RuleSet, others: &[RuleSet], data: &Dataset) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("classification overlap data"));
    }
    if others.is_empty() {
        return Ok(100.0);
    }
    let reference: Vec<bool> = (0..data.n_rows())
        .map(|r| best.predicts_target(data, r))
        .collect();
    let total: f64 = others
        .iter()
        .map(|o| {
            let same = (0..data.n_rows())
                .filter(|&r| o.predicts_target(data, r) == reference[r])
                .count();
            same as f64 / data.n_rows() as f64 * 100.0
        })
        .sum();
    Ok(total / others.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConsistency {
    pub class: String,
    pub best_f: f64,
    /// Well-performing rule-sets compared against the best one.
    pub compared: usize,
    pub rule_match: f64,
    pub classification_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub per_class: Vec<ClassConsistency>,
    pub mean_rule_match: f64,
    pub mean_classification_overlap: f64,
}

/// Compares each class's best rule-set with the other well-performing ones.
pub fn consistency(sweep: &SweepResult, data: &Dataset) -> Result<ConsistencyReport> {
    let mut per_class = Vec::with_capacity(sweep.classes.len());
    for c in &sweep.classes {
        let others: Vec<RuleSet> = c
            .well_performing
            .iter()
            .filter(|(cell, _)| (cell.seed, cell.min_cover) != (c.best.seed, c.best.min_cover))
            .map(|(_, rs)| rs.clone())
            .collect();
        per_class.push(ClassConsistency {
            class: c.best_ruleset.class.clone(),
            best_f: c.best.f_score,
            compared: others.len(),
            rule_match: rule_match(&c.best_ruleset, &others),
            classification_overlap: classification_overlap(&c.best_ruleset, &others, data)?,
        });
    }
    let n = per_class.len().max(1) as f64;
    Ok(ConsistencyReport {
        mean_rule_match: per_class.iter().map(|c| c.rule_match).sum::<f64>() / n,
        mean_classification_overlap: per_class
            .iter()
            .map(|c| c.classification_overlap)
            .sum::<f64>()
            / n,
        per_class,
    })
}
