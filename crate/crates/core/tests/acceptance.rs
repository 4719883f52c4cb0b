//! Acceptance suite: one PASS / FAIL / SKIPPED line per criterion.
//!
//! Criteria 2, 3 and 6 need the four-class science newsgroup subset. Point
//! `GRADRULES_SCI_CORPUS` at a directory holding it (either one directory
//! per class, or `train/` and `test/` with one directory per class inside);
//! without it those criteria are reported as SKIPPED.

mod common;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use gradrules::explain::{run_until, BinaryScores, ExplanationBundle, Stage};
use gradrules::ripper::{apply_ruleset, induce_binary, induce_binary_traced, Condition, Firing, RipperConfig};
use gradrules::select::{mutual_information, SelectionMethod};
use gradrules::synth::PlantedCorpus;
use gradrules::transform::{reweigh_dense, sign_reduce};
use gradrules::{run_pipeline, FeatureMatrix, MinCoverGrid, Mode, RuleSet, RunConfig, SparseRow};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;

const CORPUS_VAR: &str = "GRADRULES_SCI_CORPUS";

enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn report(n: usize, name: &str, outcome: &Outcome) {
    let (tag, detail) = match outcome {
        Outcome::Pass(d) => ("PASS", d),
        Outcome::Fail(d) => ("FAIL", d),
        Outcome::Skipped(d) => ("SKIPPED", d),
    };
    // written past the test harness's capture so the lines always show
    let _ = writeln!(std::io::stdout(), "criterion {n} [{name}]: {tag}: {detail}");
}

fn corpus_root() -> Option<PathBuf> {
    std::env::var_os(CORPUS_VAR).map(PathBuf::from).filter(|p| p.is_dir())
}

fn skip_reason() -> String {
    format!("{CORPUS_VAR} is not set to a corpus directory; the science newsgroup subset is not bundled")
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let nets = 25;
    let mut worst: f64 = 0.0;
    for seed in 0..nets {
        let net = random_network(&[20, 16, 16, 4], 500 + seed);
        let mut r = rng(900 + seed);
        let x = loop {
            let x: Vec<f64> = (0..20).map(|_| r.random_range(0.0..1.0)).collect();
            if kink_distance(&net, &x) > 1e-3 {
                break x;
            }
        };
        for n in 0..4 {
            let g = net.input_gradient(&sparse(&x), n);
            let fd = finite_difference(&net, &x, n, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                worst = worst.max(relative_error(*a, *b));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!("{nets} networks, max relative error {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn corpus_config(corpus: &Path, out: &Path, selector: SelectionMethod) -> RunConfig {
    RunConfig {
        corpus: Some(corpus.to_path_buf()),
        out: Some(out.to_path_buf()),
        mode: Mode::TestPredictions,
        selector,
        seeds: 10,
        min_cover_grid: MinCoverGrid::default(),
        ..RunConfig::default()
    }
}

fn classifier_band(corpus: &Path, work: &Path) -> Outcome {
    let start = Instant::now();
    let out = work.join("mi");
    match run_until(&corpus_config(corpus, &out, SelectionMethod::MutualInformation), Stage::Train) {
        Ok(state) => {
            let f = state.model.expect("train stage ran").test.macro_f;
            let elapsed = start.elapsed();
            verdict(
                f >= 0.75 && elapsed < Duration::from_secs(600),
                format!("test macro-F {f:.4} (band >= 0.75), {:.0}s", elapsed.as_secs_f64()),
            )
        }
        Err(e) => Outcome::Fail(format!("pipeline error: {e}")),
    }
}

fn fidelity_band(
    corpus: &Path,
    work: &Path,
) -> (Outcome, Option<ExplanationBundle>) {
    let start = Instant::now();
    let mi = run_pipeline(&corpus_config(corpus, &work.join("mi"), SelectionMethod::MutualInformation));
    let sa = run_pipeline(&corpus_config(corpus, &work.join("sa"), SelectionMethod::Sensitivity));
    let elapsed = start.elapsed();
    match (mi, sa) {
        (Ok(mi), Ok(sa)) => {
            let m = &mi.fidelity.fidelity;
            let s = &sa.fidelity.fidelity;
            let ok = m.macro_f >= 0.70
                && m.macro_precision >= 0.85
                && (s.macro_f - m.macro_f).abs() <= 0.03
                && elapsed < Duration::from_secs(1800);
            (
                verdict(
                    ok,
                    format!(
                        "MI macro P/R/F {:.4}/{:.4}/{:.4}, SA macro-F {:.4}, {:.0}s",
                        m.macro_precision,
                        m.macro_recall,
                        m.macro_f,
                        s.macro_f,
                        elapsed.as_secs_f64()
                    ),
                ),
                Some(mi),
            )
        }
        (Err(e), _) | (_, Err(e)) => (Outcome::Fail(format!("pipeline error: {e}")), None),
    }
}

fn planted_case(seed: u64) -> (PlantedDnf, Vec<Vec<f64>>, Vec<bool>) {
    let mut r = rng(seed);
    let n_features = r.random_range(4..=10);
    loop {
        let dnf = PlantedDnf::random(&mut r, n_features);
        let rows = dnf.rows(&mut r, 500);
        let labels: Vec<bool> = rows.iter().map(|x| dnf.label(x)).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        if (20..=480).contains(&pos) {
            return (dnf, rows, labels);
        }
    }
}

fn ripper_oracle() -> Outcome {
    let start = Instant::now();
    let config = RipperConfig::default();
    let mut exact = 0;
    let mut noisy_good = 0;
    for seed in 0..50u64 {
        let (dnf, rows, labels) = planted_case(10_000 + seed);
        let data = discrete_dataset(&rows);
        let rs = match induce_binary(&data, &labels, &config) {
            Ok(rs) => rs,
            Err(e) => return Outcome::Fail(format!("induction error: {e}")),
        };
        let s = BinaryScores::from_decisions((0..rows.len()).map(|j| rs.predicts_target(&data, j)), &labels);
        if s.f_score == 1.0 {
            exact += 1;
        }

        let mut r = rng(20_000 + seed);
        let noisy: Vec<bool> = labels.iter().map(|&l| if r.random_bool(0.05) { !l } else { l }).collect();
        let rs = induce_binary(&data, &noisy, &config).expect("valid input");
        let held_out = dnf.rows(&mut r, 500);
        let truth: Vec<bool> = held_out.iter().map(|x| dnf.label(x)).collect();
        let test = discrete_dataset(&held_out);
        let s = BinaryScores::from_decisions((0..500).map(|j| rs.predicts_target(&test, j)), &truth);
        if s.f_score >= 0.95 {
            noisy_good += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        exact == 50 && noisy_good >= 45 && elapsed < Duration::from_secs(120),
        format!(
            "noise-free fidelity 1.0 on {exact}/50, 5% noise held-out F >= 0.95 on {noisy_good}/50, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Calls `visit` on one table per orbit of 3x4 tables with cells in
/// `0..=max` under row and column permutations: those whose rows and
/// columns are both in non-increasing lexicographic order. Every matrix
/// can be brought into that form by permuting rows and columns.
fn doubly_lexical_tables(max: usize, mut visit: impl FnMut(&[Vec<usize>])) {
    let digits = |code: usize| -> [usize; 4] {
        let v = max + 1;
        [code / (v * v * v), code / (v * v) % v, code / v % v, code % v]
    };
    let rows: Vec<[usize; 4]> = (0..(max + 1).pow(4)).map(digits).collect();
    let mut table = vec![vec![0usize; 4]; 3];
    for (i0, r0) in rows.iter().enumerate() {
        if r0.windows(2).any(|w| w[0] < w[1]) {
            continue;
        }
        for r1 in rows[..=i0].iter() {
            // columns tied on row 0 must be ordered by row 1
            if (0..3).any(|j| r0[j] == r0[j + 1] && r1[j] < r1[j + 1]) {
                continue;
            }
            for r2 in rows.iter().filter(|r2| *r2 <= r1) {
                let cols_ok = (0..3).all(|j| {
                    (r0[j], r1[j], r2[j]) >= (r0[j + 1], r1[j + 1], r2[j + 1])
                });
                if cols_ok {
                    table[0].copy_from_slice(r0);
                    table[1].copy_from_slice(r1);
                    table[2].copy_from_slice(r2);
                    visit(&table);
                }
            }
        }
    }
}

fn mi_oracle() -> Outcome {
    let start = Instant::now();
    let mut checked = 0u64;
    let mut worst: f64 = 0.0;
    doubly_lexical_tables(5, |t| {
        checked += 1;
        worst = worst.max((mutual_information(t) - mi_double_sum(t)).abs());
    });
    verdict(
        worst <= 1e-12,
        format!(
            "{checked} orbit representatives of all 6^12 tables, max |diff| {worst:.1e}, {:.1}s \
             (literal sweep: cargo test --release --test acceptance -- --ignored)",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn consistency_bands(bundle: &ExplanationBundle) -> Outcome {
    let report = &bundle.consistency;
    let overlaps_ok = report.per_class.iter().all(|c| c.classification_overlap >= 90.0);
    let mut by_f: Vec<_> = report.per_class.iter().collect();
    by_f.sort_by(|a, b| b.best_f.total_cmp(&a.best_f));
    let top_two_ok = by_f.iter().take(2).all(|c| c.rule_match >= 40.0);
    let rows: Vec<String> = report
        .per_class
        .iter()
        .map(|c| format!("{} match {:.0}% overlap {:.1}%", c.class, c.rule_match, c.classification_overlap))
        .collect();
    verdict(overlaps_ok && top_two_ok, rows.join("; "))
}

fn determinism(work: &Path) -> Outcome {
    let corpus = work.join("planted");
    if let Err(e) = (PlantedCorpus { docs_per_class: 30, ..PlantedCorpus::default() }).write(&corpus) {
        return Outcome::Fail(format!("corpus generation: {e}"));
    }
    let config = |out: &Path| RunConfig {
        corpus: Some(corpus.clone()),
        out: Some(out.to_path_buf()),
        seeds: 4,
        k: 60,
        ..RunConfig::default()
    };
    let a = work.join("det-a");
    let b = work.join("det-b");
    let first = match (run_pipeline(&config(&a)), run_pipeline(&config(&b))) {
        (Ok(first), Ok(_)) => first,
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(format!("pipeline error: {e}")),
    };
    let mut files = vec![
        "fidelity.json".to_string(),
        "consistency.json".to_string(),
        "sweep.csv".to_string(),
    ];
    files.extend(first.classes.iter().map(|c| format!("rules/{c}.json")));
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .collect();
    verdict(
        differing.is_empty(),
        format!("{} artifacts compared on a synthetic corpus, differing: {differing:?}", files.len()),
    )
}

fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn small_table() -> impl Strategy<Value = Vec<Vec<usize>>> {
    (1usize..4, 2usize..5)
        .prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(0usize..20, c), r))
}

fn random_rows(seed: u64, n: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| (0..cols).map(|_| [-1.0, 0.0, 1.0][r.random_range(0..3)]).collect())
        .collect()
}

fn invariant_suite() -> Outcome {
    let net_input = (any::<u64>(), prop::collection::vec(prop_oneof![Just(0.0), -2.0..2.0f64], 10));
    let checks: Vec<(&str, Result<(), String>)> = vec![
        (
            "softmax normalization",
            run_property(128, net_input.clone(), |(seed, x)| {
                let net = random_network(&[10, 8, 8, 5], seed);
                let p = net.predict(&sparse(&x)).probabilities;
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                Ok(())
            }),
        ),
        (
            "gradient-sum-zero",
            run_property(128, net_input, |(seed, x)| {
                let net = random_network(&[10, 8, 8, 5], seed);
                let row = sparse(&x);
                let grads: Vec<Vec<f64>> = (0..5).map(|n| net.input_gradient(&row, n)).collect();
                for k in 0..10 {
                    let s: f64 = grads.iter().map(|g| g[k]).sum();
                    let scale: f64 = grads.iter().map(|g| g[k].abs()).sum::<f64>().max(1.0);
                    prop_assert!(s.abs() < 1e-12 * scale);
                }
                Ok(())
            }),
        ),
        (
            "sign-reduction scale invariance",
            run_property(128, (any::<u64>(), prop_oneof![1e-3..1.0f64, 1.0..1e3f64]), |(seed, c)| {
                let mut r = rng(seed);
                let mut m = FeatureMatrix::new(8, vec!["a".into()]);
                let mut grads = Vec::new();
                for _ in 0..10 {
                    let pairs: Vec<(usize, f64)> = (0..8).map(|k| (k, r.random_range(0.0..1.0))).collect();
                    m.rows.push(SparseRow::from_pairs(pairs));
                    grads.push(
                        (0..8)
                            .map(|_| {
                                let mag = r.random_range(1e-6..10.0);
                                [-mag, 0.0, mag][r.random_range(0..3)]
                            })
                            .collect::<Vec<f64>>(),
                    );
                }
                let scaled: Vec<Vec<f64>> = grads.iter().map(|g| g.iter().map(|v| v * c).collect()).collect();
                prop_assert_eq!(
                    sign_reduce(&reweigh_dense(&m, &grads).unwrap()),
                    sign_reduce(&reweigh_dense(&m, &scaled).unwrap())
                );
                Ok(())
            }),
        ),
        (
            "MI non-negativity",
            run_property(256, small_table(), |t| {
                prop_assert!(mutual_information(&t) >= 0.0);
                Ok(())
            }),
        ),
        (
            "MI symmetry",
            run_property(256, small_table(), |t| {
                let tr: Vec<Vec<usize>> = (0..t[0].len()).map(|c| t.iter().map(|r| r[c]).collect()).collect();
                prop_assert!((mutual_information(&t) - mutual_information(&tr)).abs() < 1e-12);
                Ok(())
            }),
        ),
        (
            "MI permutation invariance",
            run_property(256, (small_table(), any::<u64>()), |(t, seed)| {
                use rand::seq::SliceRandom;
                let mut r = rng(seed);
                let mut p = t.clone();
                p.shuffle(&mut r);
                let mut cols: Vec<usize> = (0..t[0].len()).collect();
                cols.shuffle(&mut r);
                let p: Vec<Vec<usize>> = p.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect();
                prop_assert!((mutual_information(&t) - mutual_information(&p)).abs() < 1e-12);
                Ok(())
            }),
        ),
        (
            "prune-set precision > 0.5",
            run_property(48, (any::<u64>(), 1usize..6, 0usize..3), |(seed, min_cover, opt)| {
                let rows = random_rows(seed, 120, 6);
                let mut r = rng(seed ^ 1);
                let labels: Vec<bool> = rows.iter().map(|x| (x[0] == 1.0) ^ r.random_bool(0.15)).collect();
                let config = RipperConfig { seed, min_cover, optimizations: opt, ..RipperConfig::default() };
                let (_, log) = induce_binary_traced(&discrete_dataset(&rows), &labels, &config).unwrap();
                for acc in &log {
                    prop_assert!(acc.prune_precision() > 0.5);
                }
                Ok(())
            }),
        ),
        (
            "first-match application",
            run_property(128, any::<u64>(), |seed| {
                let rows = random_rows(seed, 40, 4);
                let data = discrete_dataset(&rows);
                let mut r = rng(seed ^ 2);
                let mut rs = RuleSet::empty("t", "others", RipperConfig::default());
                for _ in 0..4 {
                    let cond = Condition::eq(r.random_range(0..4), [-1.0, 0.0, 1.0][r.random_range(0..3)]);
                    rs.rules.push(gradrules::Rule::new(vec![cond]));
                }
                for (j, row) in rows.iter().enumerate() {
                    let expected = rs
                        .rules
                        .iter()
                        .position(|rule| covers(&rule.conditions, row))
                        .map_or(Firing::Default, Firing::Rule);
                    prop_assert_eq!(apply_ruleset(&rs, &data, j), expected);
                }
                Ok(())
            }),
        ),
        (
            "coverage replay",
            run_property(48, (any::<u64>(), 1usize..6), |(seed, min_cover)| {
                let rows = random_rows(seed, 150, 5);
                let labels: Vec<bool> = rows.iter().map(|x| x[1] != 0.0 && x[3] == 1.0).collect();
                let config = RipperConfig { seed, min_cover, ..RipperConfig::default() };
                let rs = induce_binary(&discrete_dataset(&rows), &labels, &config).unwrap();
                let mut counts = vec![(0usize, 0usize); rs.rules.len()];
                for (j, row) in rows.iter().enumerate() {
                    if let Some(i) = rs.rules.iter().position(|rule| covers(&rule.conditions, row)) {
                        counts[i].1 += 1;
                        counts[i].0 += usize::from(labels[j]);
                    }
                }
                for (rule, c) in rs.rules.iter().zip(&counts) {
                    prop_assert_eq!((rule.a, rule.b), *c);
                }
                Ok(())
            }),
        ),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    let names: Vec<&str> = checks.iter().map(|(n, _)| *n).collect();
    if failed.is_empty() {
        Outcome::Pass(format!("{} properties green: {}", names.len(), names.join(", ")))
    } else {
        Outcome::Fail(failed.join("; "))
    }
}

#[test]
fn acceptance() {
    let work = tempfile::tempdir().expect("temporary directory");
    let corpus = corpus_root();
    let mut outcomes = Vec::new();

    let mut record = |n: usize, name: &str, outcome: Outcome| {
        report(n, name, &outcome);
        outcomes.push((n, outcome));
    };

    record(1, "gradient correctness", gradient_correctness());
    let (fid, bundle) = match &corpus {
        Some(root) => {
            record(2, "classifier band", classifier_band(root, work.path()));
            fidelity_band(root, work.path())
        }
        None => {
            record(2, "classifier band", Outcome::Skipped(skip_reason()));
            (Outcome::Skipped(skip_reason()), None)
        }
    };
    record(3, "fidelity band", fid);
    record(4, "RIPPER oracle", ripper_oracle());
    record(5, "MI oracle", mi_oracle());
    record(
        6,
        "consistency bands",
        match (&corpus, &bundle) {
            (Some(_), Some(b)) => consistency_bands(b),
            (Some(_), None) => Outcome::Fail("no MI bundle from criterion 3".into()),
            (None, _) => Outcome::Skipped(skip_reason()),
        },
    );
    record(7, "determinism", determinism(work.path()));
    record(8, "invariant suite", invariant_suite());

    let failed: Vec<usize> = outcomes
        .iter()
        .filter(|(_, o)| matches!(o, Outcome::Fail(_)))
        .map(|(n, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

/// The literal check behind criterion 5: every one of the 6^12 tables.
/// About ten minutes on one core in release mode.
#[test]
#[ignore]
fn mi_matches_double_sum_on_every_table() {
    let mut t = vec![vec![0usize; 4]; 3];
    let mut worst: f64 = 0.0;
    for code in 0..6u64.pow(12) {
        let mut x = code;
        for row in t.iter_mut() {
            for cell in row.iter_mut() {
                *cell = (x % 6) as usize;
                x /= 6;
            }
        }
        worst = worst.max((mutual_information(&t) - mi_double_sum(&t)).abs());
    }
    assert!(worst <= 1e-12, "max |diff| {worst}");
}
