use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::consistency::{consistency, ConsistencyReport};
use super::metrics::{multiclass_scores, FidelityReport};
use super::sweep::{sweep, SweepResult};
use crate::config::{selector_name, Mode, RunConfig};
use crate::corpus::{split_corpus, DatasetSplit, DocumentSplit, Vocabulary};
use crate::error::{Error, Result};
use crate::net::{train_network, TrainedNetwork};
use crate::ripper::{Dataset, FeatureKind, RipperConfig};
use crate::select::{
    mutual_information_scores, select_top_k, sensitivity_scores, FeatureScores, SelectionMethod,
    SelectionResult,
};
use crate::sparse::{FeatureMatrix, FEATURE_MAGIC, SIGN_MAGIC};
use crate::transform::{
    reweigh, saliency_map, sign_reduce, sign_reduce_matrix, SaliencyMode, SignMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SaliencyStats {
    /// Exactly-zero entries of the full saliency map of the induction data.
    pub zero_gradient_entries: usize,
    /// Nonzero inputs that a zero gradient removed from the reweighed data.
    pub zero_gradient_inputs: usize,
    pub instances: usize,
    pub features: usize,
}

/// Signs of `inputs` reweighed by the saliency of `mode`, with zero counts.
pub fn transformed_signs(
    net: &TrainedNetwork,
    inputs: &FeatureMatrix,
    mode: SaliencyMode,
) -> Result<(SignMatrix, SaliencyStats)> {
    let sal = saliency_map(net, inputs, mode)?;
    let rw = reweigh(inputs, &sal)?;
    let stats = SaliencyStats {
        zero_gradient_entries: sal.zero_count(),
        zero_gradient_inputs: rw.zero_gradient_inputs,
        instances: inputs.n_rows(),
        features: inputs.n_features,
    };
    Ok((sign_reduce(&rw), stats))
}

/// Feature scores on the training split and the top-`k` selection.
pub fn select_features(
    method: SelectionMethod,
    net: &TrainedNetwork,
    train_inputs: &FeatureMatrix,
    train_signs: &SignMatrix,
    k: usize,
) -> Result<(FeatureScores, SelectionResult)> {
    let scores = match method {
        SelectionMethod::Sensitivity => sensitivity_scores(net, train_inputs)?,
        SelectionMethod::MutualInformation => mutual_information_scores(
            train_signs,
            train_inputs.labels()?,
            train_inputs.n_classes(),
        )?,
    };
    let selection = select_top_k(&scores, k)?;
    Ok((scores, selection))
}

pub fn selected_names(vocab: &Vocabulary, selection: &SelectionResult) -> Vec<String> {
    selection
        .indices
        .iter()
        .map(|&i| vocab.term(i).to_string())
        .collect()
}

pub fn save_features(dir: &Path, split: &DatasetSplit) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, m) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        m.save(&dir.join(format!("{name}.fm")), FEATURE_MAGIC, &split.vocab)?;
    }
    Ok(())
}

pub fn load_features(dir: &Path) -> Result<DatasetSplit> {
    let (train, vocab) = FeatureMatrix::load(&dir.join("train.fm"), FEATURE_MAGIC)?;
    let (dev, _) = FeatureMatrix::load(&dir.join("dev.fm"), FEATURE_MAGIC)?;
    let (test, _) = FeatureMatrix::load(&dir.join("test.fm"), FEATURE_MAGIC)?;
    Ok(DatasetSplit {
        vocab,
        train,
        dev,
        test,
    })
}

fn hex_digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn corpus_digest(docs: &DocumentSplit) -> String {
    let mut h = Sha256::new();
    h.update(docs.classes.join("\n").as_bytes());
    for (tag, part) in [("train", &docs.train), ("dev", &docs.dev), ("test", &docs.test)] {
        h.update(tag.as_bytes());
        for d in part.iter() {
            for field in [&d.id, &d.label, &d.raw] {
                h.update((field.len() as u64).to_le_bytes());
                h.update(field.as_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Stage bookkeeping: a stage is skipped when its key file matches and all
/// of its artifacts exist.
struct Stages {
    dir: PathBuf,
    resumed: Vec<String>,
}

impl Stages {
    fn key_path(&self, stage: &str) -> PathBuf {
        self.dir.join("cache").join(format!("{stage}.key"))
    }

    fn is_fresh(&self, stage: &str, key: &str, artifacts: &[PathBuf]) -> bool {
        let stored = fs::read_to_string(self.key_path(stage)).ok();
        stored.as_deref() == Some(key) && artifacts.iter().all(|p| p.exists())
    }

    fn mark(&mut self, stage: &str, key: &str) -> Result<()> {
        let p = self.key_path(stage);
        fs::write(&p, key).map_err(|e| Error::io(p, e))
    }

    fn invalidate(&self, stage: &str) {
        let _ = fs::remove_file(self.key_path(stage));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSelection {
    pub class: String,
    pub seed: u64,
    pub min_cover: usize,
    pub f_std: f64,
    pub cells: usize,
    pub well_performing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub mode: String,
    pub selector: String,
    pub fidelity: FidelityReport,
    pub best: Vec<ClassSelection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub dev: FidelityReport,
    pub test: FidelityReport,
}

/// Everything a pipeline run produced, as written to the bundle directory.
#[derive(Debug, Clone)]
pub struct ExplanationBundle {
    pub dir: PathBuf,
    pub classes: Vec<String>,
    pub n_features: usize,
    pub model: ModelEvaluation,
    pub saliency: Option<SaliencyStats>,
    pub fidelity: FidelitySummary,
    pub consistency: ConsistencyReport,
    /// Present when the sweep ran in this invocation.
    pub sweep: Option<SweepResult>,
    pub resumed: Vec<String>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Featurize,
    Train,
    Saliency,
    Select,
    /// Sweep, rule-sets, fidelity and consistency reports.
    Induce,
}

/// What a (possibly partial) pipeline run produced; fields of stages that
/// did not run are `None`.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub dir: PathBuf,
    pub classes: Vec<String>,
    pub n_features: usize,
    pub model: Option<ModelEvaluation>,
    pub saliency: Option<SaliencyStats>,
    pub selected: Option<Vec<String>>,
    pub fidelity: Option<FidelitySummary>,
    pub consistency: Option<ConsistencyReport>,
    pub sweep: Option<SweepResult>,
    pub resumed: Vec<String>,
}

/// Runs featurize, train, transform, select, sweep and the reports.
///
/// Each stage stores a key derived from its inputs under `cache/`; a rerun
/// with unchanged inputs loads the stored artifact instead of recomputing.
pub fn run_pipeline(config: &RunConfig) -> Result<ExplanationBundle> {
    let state = run_until(config, Stage::Induce)?;
    Ok(ExplanationBundle {
        dir: state.dir,
        classes: state.classes,
        n_features: state.n_features,
        model: state.model.expect("train stage ran"),
        saliency: state.saliency,
        fidelity: state.fidelity.expect("induce stage ran"),
        consistency: state.consistency.expect("induce stage ran"),
        sweep: state.sweep,
        resumed: state.resumed,
    })
}

/// Runs the pipeline through `last` inclusive.
pub fn run_until(config: &RunConfig, last: Stage) -> Result<PipelineState> {
    config.validate()?;
    let corpus = config
        .corpus
        .as_deref()
        .ok_or_else(|| Error::Config("corpus path is required".into()))?;
    let out = config
        .out
        .clone()
        .ok_or_else(|| Error::Config("output directory is required".into()))?;
    if config.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run_stages(config, corpus, &out, last))
    } else {
        run_stages(config, corpus, &out, last)
    }
}

fn run_stages(config: &RunConfig, corpus: &Path, out: &Path, last: Stage) -> Result<PipelineState> {
    let cache = out.join("cache");
    let rules_dir = out.join("rules");
    for d in [out, cache.as_path(), rules_dir.as_path()] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    write(&out.join("run.cfg"), config.to_kv_string())?;
    let mut stages = Stages {
        dir: out.to_path_buf(),
        resumed: Vec::new(),
    };

    // featurize
    let docs = split_corpus(corpus)?;
    if docs.classes.len() < 2 {
        return Err(Error::Config("corpus needs at least two class directories".into()));
    }
    let feat_key = hex_digest(&[b"featurize", corpus_digest(&docs).as_bytes()]);
    let fm_files: Vec<PathBuf> = ["train", "dev", "test"]
        .iter()
        .map(|n| cache.join(format!("{n}.fm")))
        .collect();
    let split = if stages.is_fresh("featurize", &feat_key, &fm_files) {
        stages.resumed.push("featurize".into());
        load_features(&cache)?
    } else {
        stages.invalidate("featurize");
        let split = docs.featurize()?;
        save_features(&cache, &split)?;
        stages.mark("featurize", &feat_key)?;
        split
    };
    drop(docs);
    let classes = split.train.class_names.clone();
    info!(
        "features: {} terms, {}/{}/{} train/dev/test documents",
        split.vocab.len(),
        split.train.n_rows(),
        split.dev.n_rows(),
        split.test.n_rows()
    );
    let mut state = PipelineState {
        dir: out.to_path_buf(),
        classes: classes.clone(),
        n_features: split.vocab.len(),
        model: None,
        saliency: None,
        selected: None,
        fidelity: None,
        consistency: None,
        sweep: None,
        resumed: Vec::new(),
    };
    if last == Stage::Featurize {
        state.resumed = stages.resumed;
        return Ok(state);
    }

    // train
    let net_config = config.network_config();
    let net_path = out.join("model.net");
    let train_key = hex_digest(&[
        b"train",
        feat_key.as_bytes(),
        serde_json::to_string(&net_config)?.as_bytes(),
    ]);
    let net = if stages.is_fresh("train", &train_key, std::slice::from_ref(&net_path)) {
        stages.resumed.push("train".into());
        TrainedNetwork::load(&net_path)?
    } else {
        stages.invalidate("train");
        let net = train_network(
            &split.train,
            split.train.labels()?,
            classes.len(),
            &net_config,
        )?;
        net.save(&net_path)?;
        stages.mark("train", &train_key)?;
        net
    };
    let model = ModelEvaluation {
        dev: multiclass_scores(&net.predict_all(&split.dev), split.dev.labels()?, &classes)?,
        test: multiclass_scores(&net.predict_all(&split.test), split.test.labels()?, &classes)?,
    };
    write_json(&out.join("model_eval.json"), &model)?;
    info!("classifier test macro-F {:.4}", model.test.macro_f);
    state.model = Some(model);
    if last == Stage::Train {
        state.resumed = stages.resumed;
        return Ok(state);
    }

    // transform
    let transform_key = hex_digest(&[
        b"transform",
        train_key.as_bytes(),
        config.mode.as_str().as_bytes(),
    ]);
    let select_sm = cache.join("select.sm");
    let induce_sm = cache.join("induce.sm");
    let saliency_json = out.join("saliency.json");
    let (select_signs, induce_signs, saliency) = match config.mode {
        Mode::TrainGoldOriginal => {
            let presence = sign_reduce_matrix(&split.train);
            (presence, None, None)
        }
        mode => {
            let artifacts = [select_sm.clone(), induce_sm.clone(), saliency_json.clone()];
            if stages.is_fresh("transform", &transform_key, &artifacts) {
                stages.resumed.push("transform".into());
                let (s, _) = FeatureMatrix::load(&select_sm, SIGN_MAGIC)?;
                let (i, _) = FeatureMatrix::load(&induce_sm, SIGN_MAGIC)?;
                let stats: SaliencyStats = read_json(&saliency_json)?;
                (SignMatrix { matrix: s }, Some(SignMatrix { matrix: i }), Some(stats))
            } else {
                stages.invalidate("transform");
                let (sal_mode, induce_inputs) = match mode {
                    Mode::TestPredictions => (SaliencyMode::PredictedClass, &split.test),
                    _ => (SaliencyMode::GoldClass, &split.train),
                };
                let (train_signs, train_stats) =
                    transformed_signs(&net, &split.train, sal_mode)?;
                let (signs, stats) = if mode == Mode::TestPredictions {
                    transformed_signs(&net, induce_inputs, sal_mode)?
                } else {
                    (train_signs.clone(), train_stats)
                };
                train_signs.matrix.save(&select_sm, SIGN_MAGIC, &split.vocab)?;
                signs.matrix.save(&induce_sm, SIGN_MAGIC, &split.vocab)?;
                write_json(&saliency_json, &stats)?;
                stages.mark("transform", &transform_key)?;
                (train_signs, Some(signs), Some(stats))
            }
        }
    };
    if let Some(s) = &saliency {
        info!(
            "saliency: {} zero gradient entries over {}x{}; {} inputs vanished",
            s.zero_gradient_entries, s.instances, s.features, s.zero_gradient_inputs
        );
    }
    state.saliency = saliency;
    if last == Stage::Saliency {
        state.resumed = stages.resumed;
        return Ok(state);
    }

    // select
    let selection_path = out.join("selection.tsv");
    let select_key = hex_digest(&[
        b"select",
        transform_key.as_bytes(),
        selector_name(config.selector).as_bytes(),
        config.k.to_string().as_bytes(),
    ]);
    let selection = if stages.is_fresh("select", &select_key, std::slice::from_ref(&selection_path))
    {
        stages.resumed.push("select".into());
        SelectionResult::load(&selection_path)?.0
    } else {
        stages.invalidate("select");
        let (scores, selection) =
            select_features(config.selector, &net, &split.train, &select_signs, config.k)?;
        selection.save(&selection_path, &scores, &split.vocab)?;
        stages.mark("select", &select_key)?;
        selection
    };
    let names = selected_names(&split.vocab, &selection);
    state.selected = Some(names.clone());
    if last == Stage::Select {
        state.resumed = stages.resumed;
        return Ok(state);
    }

    // induction data and targets
    let (data, targets) = match config.mode {
        Mode::TestPredictions => (
            Dataset::from_sparse(
                &induce_signs.as_ref().expect("signs computed").matrix,
                &selection.indices,
                names,
                FeatureKind::Discrete,
            )?,
            net.predict_all(&split.test),
        ),
        Mode::TrainGoldTransformed => (
            Dataset::from_sparse(
                &induce_signs.as_ref().expect("signs computed").matrix,
                &selection.indices,
                names,
                FeatureKind::Discrete,
            )?,
            split.train.labels()?.to_vec(),
        ),
        Mode::TrainGoldOriginal => {
            let data = if config.binarize_original {
                Dataset::from_sparse(
                    &select_signs.matrix,
                    &selection.indices,
                    names,
                    FeatureKind::Discrete,
                )?
            } else {
                Dataset::from_sparse(&split.train, &selection.indices, names, FeatureKind::Numeric)?
            };
            (data, split.train.labels()?.to_vec())
        }
    };

    // sweep and reports
    let base = RipperConfig {
        seed: config.seed,
        min_cover: 2,
        optimizations: config.optimizations,
        grow_fraction: config.grow_fraction,
    };
    let seeds = config.ripper_seeds();
    let sweep_key = hex_digest(&[
        b"sweep",
        select_key.as_bytes(),
        config.binarize_original.to_string().as_bytes(),
        serde_json::to_string(&(&base, &seeds, &config.min_cover_grid))?.as_bytes(),
    ]);
    let mut outputs: Vec<PathBuf> = ["fidelity.json", "consistency.json", "sweep.csv"]
        .iter()
        .map(|f| out.join(f))
        .collect();
    for c in &classes {
        outputs.push(rules_dir.join(format!("{c}.json")));
        outputs.push(rules_dir.join(format!("{c}.txt")));
    }

    let (fidelity, consistency_report, sweep_result) =
        if stages.is_fresh("sweep", &sweep_key, &outputs) {
            stages.resumed.push("sweep".into());
            (
                read_json(&out.join("fidelity.json"))?,
                read_json(&out.join("consistency.json"))?,
                None,
            )
        } else {
            stages.invalidate("sweep");
            let result = sweep(&data, &targets, &classes, &seeds, &config.min_cover_grid, &base)?;
            let report = consistency(&result, &data)?;
            let summary = FidelitySummary {
                mode: config.mode.to_string(),
                selector: selector_name(config.selector).to_string(),
                fidelity: result.report.clone(),
                best: result
                    .classes
                    .iter()
                    .map(|c| ClassSelection {
                        class: classes[c.class].clone(),
                        seed: c.best.seed,
                        min_cover: c.best.min_cover,
                        f_std: c.f_std,
                        cells: result.cells.iter().filter(|x| x.class == c.class).count(),
                        well_performing: c.well_performing.len(),
                    })
                    .collect(),
            };
            for c in &result.classes {
                let rs = &c.best_ruleset;
                write(&rules_dir.join(format!("{}.json", rs.class)), rs.to_json(&data)?)?;
                write(&rules_dir.join(format!("{}.txt", rs.class)), rs.render(&data))?;
            }
            write_json(&out.join("fidelity.json"), &summary)?;
            write_json(&out.join("consistency.json"), &report)?;
            write(&out.join("sweep.csv"), result.to_csv(&classes))?;
            stages.mark("sweep", &sweep_key)?;
            (summary, report, Some(result))
        };
    info!(
        "fidelity macro P/R/F {:.4}/{:.4}/{:.4}",
        fidelity.fidelity.macro_precision, fidelity.fidelity.macro_recall, fidelity.fidelity.macro_f
    );

    state.fidelity = Some(fidelity);
    state.consistency = Some(consistency_report);
    state.sweep = sweep_result;
    state.resumed = stages.resumed;
    Ok(state)
}
