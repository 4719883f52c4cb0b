use std::fs;
use std::path::Path;

use gradrules::explain::{run_until, Stage};
use gradrules::ripper::RuleSetDoc;
use gradrules::synth::PlantedCorpus;
use gradrules::{run_pipeline, Mode, RunConfig, MinCoverGrid};
use gradrules::select::SelectionMethod;

fn config(corpus: &Path, out: &Path) -> RunConfig {
    RunConfig {
        corpus: Some(corpus.to_path_buf()),
        out: Some(out.to_path_buf()),
        seeds: 3,
        k: 40,
        ..RunConfig::default()
    }
}

fn tiny_corpus(root: &Path) {
    PlantedCorpus::default().write(root).unwrap();
}

#[test]
fn planted_vocabulary_is_explained_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    tiny_corpus(&corpus);
    for mode in [Mode::TestPredictions, Mode::TrainGoldTransformed, Mode::TrainGoldOriginal] {
        for selector in [SelectionMethod::MutualInformation, SelectionMethod::Sensitivity] {
            let out = dir.path().join(format!("{mode}-{selector:?}"));
            let c = RunConfig { mode, selector, ..config(&corpus, &out) };
            let bundle = run_pipeline(&c).unwrap();
            assert_eq!(bundle.classes.len(), 4);
            assert_eq!(bundle.fidelity.fidelity.macro_f, 1.0, "{mode} {selector:?}");
            assert_eq!(bundle.saliency.is_some(), mode != Mode::TrainGoldOriginal);
        }
    }
}

#[test]
fn bundle_layout_and_rule_files() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    tiny_corpus(&corpus);
    let out = dir.path().join("run");
    let bundle = run_pipeline(&config(&corpus, &out)).unwrap();
    for f in ["model.net", "selection.tsv", "fidelity.json", "consistency.json", "sweep.csv", "run.cfg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let cfg = fs::read_to_string(out.join("run.cfg")).unwrap();
    assert_eq!(RunConfig::from_str_kv(&cfg).unwrap(), config(&corpus, &out));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("class,seed,min_cover,P,R,F\n"));
    for class in &bundle.classes {
        let doc = RuleSetDoc::from_json(&fs::read_to_string(out.join(format!("rules/{class}.json"))).unwrap()).unwrap();
        let text = fs::read_to_string(out.join(format!("rules/{class}.txt"))).unwrap();
        assert_eq!(doc.render(), text);
        assert!(text.starts_with("if ("));
        assert!(text.lines().last().unwrap().starts_with("else: others ("));
        // planted markers are the only words that separate the classes
        for rule in &doc.rules {
            assert!(rule.conditions.iter().any(|c| c.term.starts_with("mark")), "{text}");
        }
    }
}

#[test]
fn reruns_are_byte_identical_and_resume_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    tiny_corpus(&corpus);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let first = run_pipeline(&config(&corpus, &a)).unwrap();
    assert!(first.resumed.is_empty());
    run_pipeline(&config(&corpus, &b)).unwrap();
    let mut files = vec!["fidelity.json".to_string(), "consistency.json".into(), "sweep.csv".into(), "model.net".into(), "selection.tsv".into()];
    files.extend(first.classes.iter().map(|c| format!("rules/{c}.json")));
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let again = run_pipeline(&config(&corpus, &a)).unwrap();
    assert_eq!(again.resumed, ["featurize", "train", "transform", "select", "sweep"]);
    assert_eq!(again.fidelity, first.fidelity);
    assert!(again.sweep.is_none());

    // a different grid reuses everything up to selection
    let changed = RunConfig { min_cover_grid: MinCoverGrid::Values(vec![2]), ..config(&corpus, &a) };
    let third = run_pipeline(&changed).unwrap();
    assert_eq!(third.resumed, ["featurize", "train", "transform", "select"]);
    assert!(third.sweep.is_some());
}

#[test]
fn partial_runs_stop_after_the_requested_stage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    tiny_corpus(&corpus);
    let out = dir.path().join("run");
    let state = run_until(&config(&corpus, &out), Stage::Train).unwrap();
    assert!(state.model.is_some());
    assert!(state.selected.is_none());
    assert!(out.join("model.net").is_file());
    assert!(!out.join("selection.tsv").exists());
    let state = run_until(&config(&corpus, &out), Stage::Select).unwrap();
    assert_eq!(state.resumed, ["featurize", "train"]);
    assert_eq!(state.selected.unwrap().len(), 40);
}

#[test]
fn invalid_runs_fail_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut c = config(dir.path(), &out);
    c.k = 0;
    assert!(run_pipeline(&c).is_err());
    assert!(!out.exists());
    let missing = config(&dir.path().join("nope"), &out);
    assert!(run_pipeline(&missing).is_err());
}
