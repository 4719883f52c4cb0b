//! RIPPER-k rule induction: rule and rule-set types, first-match
//! application, JSON serialization and text rendering.

use std::fmt;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::FeatureMatrix;

mod induce;

pub use induce::{
    foil_gain, grow_rule, induce_binary, induce_binary_traced, induce_one_vs_rest,
    prevalence_order, prune_metric, prune_rule, Acceptance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Values in `{-1, 0, 1}`, tested with equality.
    Discrete,
    /// Real values, tested with `<=` / `>=` thresholds.
    Numeric,
}

/// Dense instance-by-column table that rules are induced over.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    pub kinds: Vec<FeatureKind>,
    /// Display name of each column.
    pub names: Vec<String>,
    /// Identifier of each column in the source feature space.
    pub feature_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from row-major values. Discrete columns must only
    /// hold `-1`, `0` or `1`.
    pub fn new(
        n_rows: usize,
        values: Vec<f64>,
        kinds: Vec<FeatureKind>,
        names: Vec<String>,
        feature_ids: Vec<usize>,
    ) -> Result<Self> {
        let n_cols = kinds.len();
        if values.len() != n_rows * n_cols || names.len() != n_cols || feature_ids.len() != n_cols
        {
            return Err(Error::Shape("dataset dimensions disagree".into()));
        }
        for (i, v) in values.iter().enumerate() {
            let ok = match kinds[i % n_cols.max(1)] {
                FeatureKind::Discrete => *v == -1.0 || *v == 0.0 || *v == 1.0,
                FeatureKind::Numeric => v.is_finite(),
            };
            if !ok {
                return Err(Error::Shape(format!("invalid value {v} at flat index {i}")));
            }
        }
        Ok(Dataset {
            n_rows,
            n_cols,
            values,
            kinds,
            names,
            feature_ids,
        })
    }

    /// Projects `columns` of a sparse matrix into a dense dataset.
    pub fn from_sparse(
        m: &FeatureMatrix,
        columns: &[usize],
        names: Vec<String>,
        kind: FeatureKind,
    ) -> Result<Self> {
        let n_cols = columns.len();
        let mut position = vec![usize::MAX; m.n_features];
        for (c, &f) in columns.iter().enumerate() {
            if f >= m.n_features {
                return Err(Error::Shape(format!("column {f} outside matrix")));
            }
            position[f] = c;
        }
        let mut values = vec![0.0; m.n_rows() * n_cols];
        for (j, row) in m.rows.iter().enumerate() {
            for (f, v) in row.iter() {
                let c = position[f];
                if c != usize::MAX {
                    values[j * n_cols + c] = v;
                }
            }
        }
        Dataset::new(m.n_rows(), values, vec![kind; n_cols], names, columns.to_vec())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    /// Column holding source feature `id`, if any.
    pub fn column_of(&self, id: usize) -> Option<usize> {
        self.feature_ids.iter().position(|&f| f == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Eq => "=",
            Op::Le => "<=",
            Op::Ge => ">=",
        })
    }
}

/// A single test on one column.
#[derive(Debug, Clone, Copy)]
pub struct Condition {
    pub feature: usize,
    pub op: Op,
    pub value: f64,
}

impl Condition {
    pub fn eq(feature: usize, value: f64) -> Self {
        Condition {
            feature,
            op: Op::Eq,
            value,
        }
    }

    #[inline]
    pub fn holds(&self, x: f64) -> bool {
        match self.op {
            Op::Eq => x == self.value,
            Op::Le => x <= self.value,
            Op::Ge => x >= self.value,
        }
    }

    fn key(&self) -> (usize, Op, u64) {
        // Normalize -0.0 so equal tests compare equal.
        (self.feature, self.op, (self.value + 0.0).to_bits())
    }
}

impl PartialEq for Condition {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Condition {}

impl Hash for Condition {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for Condition {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Condition {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.feature
            .cmp(&other.feature)
            .then(self.op.cmp(&other.op))
            .then((self.value + 0.0).total_cmp(&(other.value + 0.0)))
    }
}

/// Conjunction of conditions with its first-match coverage: `b` instances
/// reach and satisfy the rule, `a` of them belong to the target class.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    pub a: usize,
    pub b: usize,
}

impl Rule {
    pub fn new(conditions: Vec<Condition>) -> Self {
        Rule {
            conditions,
            a: 0,
            b: 0,
        }
    }

    #[inline]
    pub fn covers(&self, data: &Dataset, row: usize) -> bool {
        let values = data.row(row);
        self.conditions.iter().all(|c| c.holds(values[c.feature]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipperConfig {
    pub seed: u64,
    pub min_cover: usize,
    pub optimizations: usize,
    pub grow_fraction: f64,
}

impl Default for RipperConfig {
    fn default() -> Self {
        RipperConfig {
            seed: 1,
            min_cover: 2,
            optimizations: 2,
            grow_fraction: 2.0 / 3.0,
        }
    }
}

impl RipperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cover == 0 {
            return Err(Error::Config("min_cover must be >= 1".into()));
        }
        if self.optimizations > 5 {
            return Err(Error::Config("optimization rounds must be in 0..=5".into()));
        }
        if !(self.grow_fraction > 0.0 && self.grow_fraction < 1.0) {
            return Err(Error::Config("grow fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Ordered rules for one target class with a final default.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub class: String,
    pub default: String,
    pub rules: Vec<Rule>,
    /// Coverage of the final else: `(correct, total)`.
    pub default_coverage: (usize, usize),
    pub config: RipperConfig,
}

/// Which branch of a rule-set fired for an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Firing {
    Rule(usize),
    Default,
}

impl Firing {
    pub fn is_rule(self) -> bool {
        matches!(self, Firing::Rule(_))
    }
}

impl fmt::Display for Firing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Firing::Rule(i) => write!(f, "{i}"),
            Firing::Default => f.write_str("else"),
        }
    }
}

/// First-match application.
pub fn apply_ruleset(ruleset: &RuleSet, data: &Dataset, row: usize) -> Firing {
    ruleset
        .rules
        .iter()
        .position(|r| r.covers(data, row))
        .map_or(Firing::Default, Firing::Rule)
}

impl RuleSet {
    pub fn empty(class: &str, default: &str, config: RipperConfig) -> Self {
        RuleSet {
            class: class.to_string(),
            default: default.to_string(),
            rules: Vec::new(),
            default_coverage: (0, 0),
            config,
        }
    }

    /// True when some rule fires, i.e. the instance is assigned the target.
    pub fn predicts_target(&self, data: &Dataset, row: usize) -> bool {
        apply_ruleset(self, data, row).is_rule()
    }

    /// Recomputes first-match `(a/b)` counts of every rule and the default
    /// over all rows of `data`.
    pub fn annotate(&mut self, data: &Dataset, positives: &[bool]) {
        for r in &mut self.rules {
            r.a = 0;
            r.b = 0;
        }
        let mut default = (0, 0);
        for (row, &pos) in positives.iter().enumerate().take(data.n_rows()) {
            match apply_ruleset(self, data, row) {
                Firing::Rule(i) => {
                    self.rules[i].b += 1;
                    self.rules[i].a += usize::from(pos);
                }
                Firing::Default => {
                    default.1 += 1;
                    default.0 += usize::from(!pos);
                }
            }
        }
        self.default_coverage = default;
    }

    pub fn to_doc(&self, data: &Dataset) -> RuleSetDoc {
        RuleSetDoc {
            class: self.class.clone(),
            rules: self
                .rules
                .iter()
                .map(|r| RuleDoc {
                    conditions: r
                        .conditions
                        .iter()
                        .map(|c| ConditionDoc {
                            feature: data.feature_ids[c.feature],
                            term: data.names[c.feature].clone(),
                            op: c.op,
                            value: c.value,
                        })
                        .collect(),
                    a: r.a,
                    b: r.b,
                })
                .collect(),
            default: self.default.clone(),
            default_a: self.default_coverage.0,
            default_b: self.default_coverage.1,
            config: self.config,
        }
    }

    pub fn to_json(&self, data: &Dataset) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_doc(data))?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, data: &Dataset) -> String {
        self.to_doc(data).render()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDoc {
    pub feature: usize,
    pub term: String,
    pub op: Op,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDoc {
    pub conditions: Vec<ConditionDoc>,
    pub a: usize,
    pub b: usize,
}

/// Serialized rule-set; conditions refer to source feature ids and terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSetDoc {
    pub class: String,
    pub rules: Vec<RuleDoc>,
    pub default: String,
    pub default_a: usize,
    pub default_b: usize,
    pub config: RipperConfig,
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl RuleSetDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One line per rule: `if (t = v) and ... ⇒ class (a/b)`, `elif ...`,
    /// then `else: default (a/b)`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, rule) in self.rules.iter().enumerate() {
            out.push_str(if i == 0 { "if " } else { "elif " });
            let conds: Vec<String> = rule
                .conditions
                .iter()
                .map(|c| format!("({} {} {})", c.term, c.op, format_value(c.value)))
                .collect();
            let _ = writeln!(
                out,
                "{} ⇒ {} ({}/{})",
                conds.join(" and "),
                self.class,
                rule.a,
                rule.b
            );
        }
        let _ = writeln!(
            out,
            "else: {} ({}/{})",
            self.default, self.default_a, self.default_b
        );
        out
    }

    /// Rebuilds a rule-set over `data`, mapping feature ids to columns.
    pub fn to_ruleset(&self, data: &Dataset) -> Result<RuleSet> {
        let rules = self
            .rules
            .iter()
            .map(|r| {
                let conditions = r
                    .conditions
                    .iter()
                    .map(|c| {
                        let col = data.column_of(c.feature).ok_or_else(|| {
                            Error::Shape(format!("feature {} ({}) not in data", c.feature, c.term))
                        })?;
                        Ok(Condition {
                            feature: col,
                            op: c.op,
                            value: c.value,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Rule {
                    conditions,
                    a: r.a,
                    b: r.b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RuleSet {
            class: self.class.clone(),
            default: self.default.clone(),
            rules,
            default_coverage: (self.default_a, self.default_b),
            config: self.config,
        })
    }
}
