use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Condition, Dataset, FeatureKind, Op, RipperConfig, Rule, RuleSet};
use crate::error::Result;

/// FOIL information gain of specializing a rule covering `p0`/`n0`
/// positives/negatives into one covering `p1`/`n1`.
pub fn foil_gain(p1: usize, n1: usize, p0: usize, n0: usize) -> f64 {
    if p1 == 0 {
        return f64::NEG_INFINITY;
    }
    let (p1, n1, p0, n0) = (p1 as f64, n1 as f64, p0 as f64, n0 as f64);
    p1 * ((p1 / (p1 + n1)).log2() - (p0 / (p0 + n0)).log2())
}

/// Pruning metric `(p - n) / (p + n)`; a rule covering nothing scores -1.
pub fn prune_metric(p: usize, n: usize) -> f64 {
    if p + n == 0 {
        -1.0
    } else {
        (p as f64 - n as f64) / (p + n) as f64
    }
}

fn covers(conditions: &[Condition], values: &[f64]) -> bool {
    conditions.iter().all(|c| c.holds(values[c.feature]))
}

fn count(data: &Dataset, rows: &[usize], positives: &[bool], conds: &[Condition]) -> (usize, usize) {
    let mut p = 0;
    let mut n = 0;
    for &r in rows {
        if covers(conds, data.row(r)) {
            if positives[r] {
                p += 1;
            } else {
                n += 1;
            }
        }
    }
    (p, n)
}

#[inline]
fn discrete_slot(v: f64) -> usize {
    // -1 -> 0, 0 -> 1, 1 -> 2
    (v as i64 + 1) as usize
}

struct Candidate {
    condition: Condition,
    gain: f64,
}

fn consider(best: &mut Option<Candidate>, condition: Condition, gain: f64) {
    if gain.is_finite() && best.as_ref().is_none_or(|b| gain > b.gain) {
        *best = Some(Candidate { condition, gain });
    }
}

/// Grows a conjunction on `grow` rows, starting from `start`.
///
/// Each step adds the condition with the largest FOIL gain over the rows
/// the current conjunction covers. Candidates are visited by column, then
/// `=`, `<=`, `>=`, then ascending value, and only a strictly larger gain
/// displaces the incumbent, which fixes the tie-break. Growth stops once no
/// negatives are covered or no candidate has positive gain.
pub fn grow_rule(
    data: &Dataset,
    grow: &[usize],
    positives: &[bool],
    start: &[Condition],
) -> Vec<Condition> {
    let mut conditions = start.to_vec();
    let mut used = vec![false; data.n_cols()];
    for c in &conditions {
        used[c.feature] = true;
    }
    let mut covered: Vec<usize> = grow
        .iter()
        .copied()
        .filter(|&r| covers(&conditions, data.row(r)))
        .collect();
    let mut discrete_counts = vec![[0usize; 6]; data.n_cols()];
    let mut numeric_pairs: Vec<(f64, bool)> = Vec::new();

    loop {
        let p0 = covered.iter().filter(|&&r| positives[r]).count();
        let n0 = covered.len() - p0;
        if n0 == 0 || p0 == 0 {
            break;
        }

        discrete_counts.iter_mut().for_each(|c| *c = [0; 6]);
        for &r in &covered {
            let values = data.row(r);
            let pos = usize::from(positives[r]);
            for (col, counts) in discrete_counts.iter_mut().enumerate() {
                if data.kinds[col] == FeatureKind::Discrete {
                    counts[discrete_slot(values[col]) * 2 + pos] += 1;
                }
            }
        }

        let mut best: Option<Candidate> = None;
        for col in 0..data.n_cols() {
            if used[col] {
                continue;
            }
            match data.kinds[col] {
                FeatureKind::Discrete => {
                    let counts = &discrete_counts[col];
                    for (slot, value) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
                        let n1 = counts[slot * 2];
                        let p1 = counts[slot * 2 + 1];
                        consider(
                            &mut best,
                            Condition::eq(col, value),
                            foil_gain(p1, n1, p0, n0),
                        );
                    }
                }
                FeatureKind::Numeric => {
                    numeric_pairs.clear();
                    numeric_pairs.extend(
                        covered.iter().map(|&r| (data.value(r, col), positives[r])),
                    );
                    numeric_pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    // (threshold, positives <= threshold, negatives <= threshold)
                    let mut cumulative: Vec<(f64, usize, usize)> = Vec::new();
                    let (mut p, mut n) = (0, 0);
                    for (i, &(v, pos)) in numeric_pairs.iter().enumerate() {
                        if pos {
                            p += 1;
                        } else {
                            n += 1;
                        }
                        let last_of_run = numeric_pairs.get(i + 1).is_none_or(|next| next.0 != v);
                        if last_of_run {
                            cumulative.push((v, p, n));
                        }
                    }
                    for &(v, p_le, n_le) in &cumulative {
                        let cond = Condition {
                            feature: col,
                            op: Op::Le,
                            value: v,
                        };
                        consider(&mut best, cond, foil_gain(p_le, n_le, p0, n0));
                    }
                    let (mut p_below, mut n_below) = (0, 0);
                    for &(v, p_le, n_le) in &cumulative {
                        let cond = Condition {
                            feature: col,
                            op: Op::Ge,
                            value: v,
                        };
                        consider(&mut best, cond, foil_gain(p0 - p_below, n0 - n_below, p0, n0));
                        p_below = p_le;
                        n_below = n_le;
                    }
                }
            }
        }

        match best {
            Some(c) if c.gain > 0.0 => {
                used[c.condition.feature] = true;
                covered.retain(|&r| c.condition.holds(data.value(r, c.condition.feature)));
                conditions.push(c.condition);
            }
            _ => break,
        }
    }
    conditions
}

/// Keeps the prefix (at least `min_len` long, and at least one condition)
/// that maximizes [`prune_metric`] on `prune` rows; ties go to the shorter
/// prefix.
pub fn prune_rule(
    data: &Dataset,
    conditions: &[Condition],
    prune: &[usize],
    positives: &[bool],
    min_len: usize,
) -> Vec<Condition> {
    let full = conditions.len();
    let shortest = min_len.max(1).min(full);
    let mut best_len = full;
    let mut best_metric = f64::NEG_INFINITY;
    for len in shortest..=full {
        let (p, n) = count(data, prune, positives, &conditions[..len]);
        let v = prune_metric(p, n);
        if v > best_metric {
            best_metric = v;
            best_len = len;
        }
    }
    conditions[..best_len].to_vec()
}

/// Shuffles `rows` and splits positives and negatives separately, giving
/// the growing set `ceil(fraction * count)` of each. A class with at least
/// two rows always keeps one for pruning; otherwise a tiny class could
/// never pass the pruning-set precision test.
fn stratified_split(
    rows: &[usize],
    positives: &[bool],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(rng);
    let (pos, neg): (Vec<usize>, Vec<usize>) = shuffled.into_iter().partition(|&r| positives[r]);
    let mut grow = Vec::new();
    let mut prune = Vec::new();
    for part in [pos, neg] {
        let mut cut = ((part.len() as f64 * fraction).ceil() as usize).min(part.len());
        if part.len() >= 2 {
            cut = cut.min(part.len() - 1);
        }
        grow.extend_from_slice(&part[..cut]);
        prune.extend_from_slice(&part[cut..]);
    }
    (grow, prune)
}

/// Statistics recorded when a rule entered the rule-set.
#[derive(Debug, Clone, PartialEq)]
pub struct Acceptance {
    pub conditions: Vec<Condition>,
    pub prune_positives: usize,
    pub prune_negatives: usize,
    pub covered_positives: usize,
}

impl Acceptance {
    pub fn prune_precision(&self) -> f64 {
        let total = self.prune_positives + self.prune_negatives;
        if total == 0 {
            0.0
        } else {
            self.prune_positives as f64 / total as f64
        }
    }
}

struct Inducer<'a> {
    data: &'a Dataset,
    positives: &'a [bool],
    config: RipperConfig,
    rng: ChaCha8Rng,
    rules: Vec<Vec<Condition>>,
    log: Vec<Acceptance>,
}

impl<'a> Inducer<'a> {
    fn covered_by_any(&self, rules: &[Vec<Condition>], r: usize) -> bool {
        let values = self.data.row(r);
        rules.iter().any(|c| covers(c, values))
    }

    /// Checks the acceptance test and returns its statistics when it passes.
    fn accept(
        &self,
        conds: &[Condition],
        prune: &[usize],
        pool: &[usize],
    ) -> Option<Acceptance> {
        if conds.is_empty() {
            return None;
        }
        let (pp, pn) = count(self.data, prune, self.positives, conds);
        let (cp, _) = count(self.data, pool, self.positives, conds);
        let stats = Acceptance {
            conditions: conds.to_vec(),
            prune_positives: pp,
            prune_negatives: pn,
            covered_positives: cp,
        };
        (stats.prune_precision() > 0.5 && cp >= self.config.min_cover).then_some(stats)
    }

    /// Sequential covering over the rows no current rule covers.
    fn cover(&mut self) {
        loop {
            let remaining: Vec<usize> = (0..self.data.n_rows())
                .filter(|&r| !self.covered_by_any(&self.rules, r))
                .collect();
            if !remaining.iter().any(|&r| self.positives[r]) {
                break;
            }
            let (grow, prune) = stratified_split(
                &remaining,
                self.positives,
                self.config.grow_fraction,
                &mut self.rng,
            );
            let grown = grow_rule(self.data, &grow, self.positives, &[]);
            let pruned = prune_rule(self.data, &grown, &prune, self.positives, 1);
            match self.accept(&pruned, &prune, &remaining) {
                Some(stats) => {
                    self.rules.push(pruned);
                    self.log.push(stats);
                }
                None => break,
            }
        }
    }

    /// Errors of the rule list on `rows` (a row is predicted positive when
    /// any rule covers it).
    fn errors(&self, rules: &[Vec<Condition>], rows: &[usize]) -> usize {
        rows.iter()
            .filter(|&&r| self.covered_by_any(rules, r) != self.positives[r])
            .count()
    }

    /// One optimization pass: each rule is compared with a replacement
    /// grown from scratch and a revision grown from the rule itself.
    fn optimize(&mut self) {
        for i in 0..self.rules.len() {
            let earlier = &self.rules[..i];
            let pool: Vec<usize> = (0..self.data.n_rows())
                .filter(|&r| !self.covered_by_any(earlier, r))
                .collect();
            if !pool.iter().any(|&r| self.positives[r]) {
                continue;
            }
            let (grow, prune) = stratified_split(
                &pool,
                self.positives,
                self.config.grow_fraction,
                &mut self.rng,
            );
            let original = self.rules[i].clone();
            let replacement = {
                let grown = grow_rule(self.data, &grow, self.positives, &[]);
                prune_rule(self.data, &grown, &prune, self.positives, 1)
            };
            let revision = {
                let grown = grow_rule(self.data, &grow, self.positives, &original);
                prune_rule(self.data, &grown, &prune, self.positives, original.len())
            };

            let mut trial = self.rules.clone();
            let mut best: Option<(usize, Vec<Condition>, Option<Acceptance>)> = None;
            for (k, cand) in [original, replacement, revision].into_iter().enumerate() {
                let stats = if k == 0 {
                    None
                } else {
                    match self.accept(&cand, &prune, &pool) {
                        Some(s) => Some(s),
                        None => continue,
                    }
                };
                trial[i] = cand.clone();
                let err = self.errors(&trial[i..], &prune);
                if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
                    best = Some((err, cand, stats));
                }
            }
            if let Some((_, chosen, stats)) = best {
                if chosen != self.rules[i] {
                    self.rules[i] = chosen;
                    self.log.extend(stats);
                }
            }
        }
    }
}

/// Binary RIPPER-k: rules for rows with `positives[r] == true`, default
/// negative.
pub fn induce_binary(data: &Dataset, positives: &[bool], config: &RipperConfig) -> Result<RuleSet> {
    induce_binary_traced(data, positives, config).map(|(rs, _)| rs)
}

/// As [`induce_binary`], also returning the acceptance statistics of every
/// rule that entered the rule-set (including ones later replaced).
pub fn induce_binary_traced(
    data: &Dataset,
    positives: &[bool],
    config: &RipperConfig,
) -> Result<(RuleSet, Vec<Acceptance>)> {
    config.validate()?;
    if positives.len() != data.n_rows() {
        return Err(crate::Error::Shape("one label per dataset row required".into()));
    }
    let mut ruleset = RuleSet::empty("positive", "negative", *config);
    let n_pos = positives.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == positives.len() {
        warn!("one-class data: rule-set holds only the default");
        ruleset.annotate(data, positives);
        return Ok((ruleset, Vec::new()));
    }

    let mut inducer = Inducer {
        data,
        positives,
        config: *config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        rules: Vec::new(),
        log: Vec::new(),
    };
    inducer.cover();
    for _ in 0..config.optimizations {
        inducer.optimize();
        inducer.cover();
    }

    ruleset.rules = inducer.rules.into_iter().map(Rule::new).collect();
    ruleset.annotate(data, positives);
    // Rules shadowed by earlier ones never fire.
    ruleset.rules.retain(|r| r.b > 0);
    Ok((ruleset, inducer.log))
}

/// Class indices ordered by increasing prevalence, ties by index.
pub fn prevalence_order(targets: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &t in targets {
        counts[t] += 1;
    }
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by_key(|&c| (counts[c], c));
    order
}

/// One independent class-vs-rest rule-set per class, indexed by class.
pub fn induce_one_vs_rest(
    data: &Dataset,
    targets: &[usize],
    class_names: &[String],
    config: &RipperConfig,
) -> Result<Vec<RuleSet>> {
    if class_names.len() < 2 {
        return Err(crate::Error::Config("one-vs-rest needs at least two classes".into()));
    }
    let mut out: Vec<Option<RuleSet>> = vec![None; class_names.len()];
    for c in prevalence_order(targets, class_names.len()) {
        let positives: Vec<bool> = targets.iter().map(|&t| t == c).collect();
        if !positives.contains(&true) {
            warn!("class {} absent from induction data", class_names[c]);
        }
        let mut rs = induce_binary(data, &positives, config)?;
        rs.class = class_names[c].clone();
        rs.default = "others".to_string();
        out[c] = Some(rs);
    }
    Ok(out.into_iter().map(|r| r.expect("every class induced")).collect())
}
