use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ripper::{Dataset, RuleSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryScores {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl BinaryScores {
    /// Precision, recall and their harmonic mean; empty denominators give 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_score = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        BinaryScores {
            precision,
            recall,
            f_score,
        }
    }

    /// Scores of `predicted` against `actual` (both boolean per row).
    pub fn from_decisions(predicted: impl IntoIterator<Item = bool>, actual: &[bool]) -> Self {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, &a) in predicted.into_iter().zip(actual) {
            match (p, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        Self::from_counts(tp, fp, fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f: f64,
}

impl FidelityReport {
    /// Unweighted means over the per-class rows.
    pub fn from_classes(per_class: Vec<ClassScores>) -> Self {
        let n = per_class.len().max(1) as f64;
        let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / n;
        FidelityReport {
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f: mean(|c| c.f_score),
            per_class,
        }
    }
}

/// One-vs-rest scores of a multi-class labeling, e.g. a classifier's
/// predictions against gold labels.
pub fn multiclass_scores(
    predicted: &[usize],
    actual: &[usize],
    class_names: &[String],
) -> Result<FidelityReport> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape("prediction and target counts differ".into()));
    }
    let per_class = class_names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let truth: Vec<bool> = actual.iter().map(|&t| t == c).collect();
            let s = BinaryScores::from_decisions(predicted.iter().map(|&p| p == c), &truth);
            ClassScores {
                class: name.clone(),
                precision: s.precision,
                recall: s.recall,
                f_score: s.f_score,
                support: truth.iter().filter(|&&t| t).count(),
            }
        })
        .collect();
    Ok(FidelityReport::from_classes(per_class))
}

/// Binary scores of one rule-set explaining class `class`.
pub fn class_fidelity(ruleset: &RuleSet, data: &Dataset, targets: &[usize], class: usize) -> BinaryScores {
    let truth: Vec<bool> = targets.iter().map(|&t| t == class).collect();
    BinaryScores::from_decisions(
        (0..data.n_rows()).map(|r| ruleset.predicts_target(data, r)),
        &truth,
    )
}

/// Fidelity of per-class rule-sets to the explained model's predictions:
/// per class, "some rule fires" is the positive prediction and
/// "target == class" the positive truth.
pub fn fidelity(rulesets: &[RuleSet], data: &Dataset, targets: &[usize]) -> Result<FidelityReport> {
    if targets.len() != data.n_rows() {
        return Err(Error::Shape("one target per row required".into()));
    }
    let per_class = rulesets
        .iter()
        .enumerate()
        .map(|(c, rs)| {
            let support = targets.iter().filter(|&&t| t == c).count();
            if support == 0 {
                warn!("class {} has no target instances; F is 0", rs.class);
            }
            let s = class_fidelity(rs, data, targets, c);
            ClassScores {
                class: rs.class.clone(),
                precision: s.precision,
                recall: s.recall,
                f_score: s.f_score,
                support,
            }
        })
        .collect();
    Ok(FidelityReport::from_classes(per_class))
}
