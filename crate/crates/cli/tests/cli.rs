use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gradrules::synth::PlantedCorpus;

fn gradrules(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradrules"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn planted(dir: &Path) -> String {
    let root = dir.join("corpus");
    PlantedCorpus::default().write(&root).unwrap();
    root.to_str().unwrap().to_string()
}

fn explain(corpus: &str, out: &Path) -> Output {
    gradrules(&[
        "explain",
        "--corpus",
        corpus,
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "2",
        "--k",
        "40",
        "--min-cover-grid",
        "2,4",
    ])
}

#[test]
fn explain_writes_a_bundle_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted(dir.path());
    let a = dir.path().join("a");
    let first = explain(&corpus, &a);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("macro fidelity"), "{stdout}");
    assert!(stdout.contains("mean rule match"), "{stdout}");
    for f in ["model.net", "selection.tsv", "fidelity.json", "consistency.json", "sweep.csv", "run.log"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }

    let b = dir.path().join("b");
    assert!(explain(&corpus, &b).status.success());
    for f in ["fidelity.json", "sweep.csv", "rules/topica.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let again = explain(&corpus, &a);
    assert!(String::from_utf8_lossy(&again.stdout).contains("reused cached stages"));
}

#[test]
fn render_prints_the_rule_set() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted(dir.path());
    let out = dir.path().join("run");
    assert!(explain(&corpus, &out).status.success());
    let rendered = gradrules(&["render", out.join("rules/topica.json").to_str().unwrap()]);
    assert!(rendered.status.success());
    let text = String::from_utf8_lossy(&rendered.stdout);
    assert_eq!(text, fs::read_to_string(out.join("rules/topica.txt")).unwrap());
    assert!(text.lines().next().unwrap().starts_with("if "), "{text}");
    assert!(text.contains("topica"));
}

#[test]
fn staged_subcommands_share_the_work_directory() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted(dir.path());
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let common = ["--corpus", corpus.as_str(), "--out", out_s, "--k", "40", "--seeds", "2"];
    for stage in ["featurize", "train", "saliency", "select"] {
        let mut args = vec![stage];
        args.extend(common);
        let o = gradrules(&args);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(out.join("selection.tsv").is_file());
    assert!(!out.join("fidelity.json").exists());

    let mut args = vec!["induce"];
    args.extend(common);
    let o = gradrules(&args);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success());
    assert!(stdout.contains("reused cached stages: featurize, train, transform, select"), "{stdout}");
    assert!(out.join("fidelity.json").is_file());
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gradrules(&["explain", "--corpus", "x", "--out", out.to_str().unwrap(), "--selector", "bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("bogus") && stderr.contains("Usage"), "{stderr}");

    assert_eq!(gradrules(&["explain", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(gradrules(&["explain", "--out", "x"]).status.code(), Some(1));
    assert_eq!(gradrules(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_corpus_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let o = gradrules(&[
        "explain",
        "--corpus",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted(dir.path());
    let out = dir.path().join("run");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("corpus={corpus}\nk=25\nseeds=1\nselector=sa\n")).unwrap();
    let o = gradrules(&["select", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--k", "30"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let written = fs::read_to_string(out.join("run.cfg")).unwrap();
    assert!(written.contains("k=30") && written.contains("selector=sa"), "{written}");
    assert_eq!(fs::read_to_string(out.join("selection.tsv")).unwrap().lines().count(), 30);
}
