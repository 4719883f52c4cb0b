use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, CommandFactory as _, Parser, Subcommand};
use gradrules::explain::{run_until, PipelineState, Stage};
use gradrules::ripper::RuleSetDoc;
use gradrules::{Error, RunConfig};

/// Explain a feedforward text classifier with if-then-else rule-sets.
#[derive(Parser, Debug)]
#[command(name = "gradrules", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tokenize the corpus and write TF-IDF matrices for train/dev/test.
    Featurize(RunArgs),
    /// Train the classifier on the training split.
    Train(RunArgs),
    /// Reweigh inputs by their gradients and reduce them to signs.
    Saliency(RunArgs),
    /// Score features and keep the top k.
    Select(RunArgs),
    /// Run the rule-induction sweep and write the best rule-sets.
    Induce(RunArgs),
    /// Full pipeline: every stage plus the fidelity and consistency reports.
    Explain(RunArgs),
    /// Print the consistency of the well-performing rule-sets.
    Consistency(RunArgs),
    /// Render a rule-set JSON file as text.
    Render {
        /// Rule-set JSON, e.g. run1/rules/<class>.json
        file: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Corpus root with one directory per class (or train/ and test/)
    #[arg(long)]
    corpus: Option<String>,
    /// Output directory for artifacts
    #[arg(long)]
    out: Option<String>,
    /// test-preds | train-gold-original | train-gold-transformed
    #[arg(long)]
    mode: Option<String>,
    /// sa | mi
    #[arg(long)]
    selector: Option<String>,
    /// Number of selected features
    #[arg(long)]
    k: Option<String>,
    /// Number of rule-induction seeds
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated min-cover values, or "full"
    #[arg(long)]
    min_cover_grid: Option<String>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    jobs: Option<String>,
    /// Global seed
    #[arg(long)]
    seed: Option<String>,
    /// key=value configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn run_config(&self) -> Result<RunConfig, Failure> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Runtime)?;
            config.apply_str(&text).map_err(Failure::usage)?;
        }
        let flags = [
            ("corpus", &self.corpus),
            ("out", &self.out),
            ("mode", &self.mode),
            ("selector", &self.selector),
            ("k", &self.k),
            ("seeds", &self.seeds),
            ("min_cover_grid", &self.min_cover_grid),
            ("jobs", &self.jobs),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v).map_err(Failure::usage)?;
            }
        }
        config.validate().map_err(Failure::usage)?;
        if config.corpus.is_none() {
            return Err(Failure::Usage("--corpus is required".into()));
        }
        if config.out.is_none() {
            return Err(Failure::Usage("--out is required".into()));
        }
        Ok(config)
    }
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn usage(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn init_logging(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log_path = out.join("run.log");
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    // a second call (tests driving main twice) keeps the first logger
    let _ = env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .parse_default_env()
        .target(env_logger::Target::Pipe(Box::new(file)))
        .try_init();
    Ok(())
}

fn print_state(state: &PipelineState, show_consistency: bool) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{} classes, {} terms, artifacts in {}",
        state.classes.len(),
        state.n_features,
        state.dir.display()
    );
    if !state.resumed.is_empty() {
        let _ = writeln!(out, "reused cached stages: {}", state.resumed.join(", "));
    }
    if let Some(m) = &state.model {
        let _ = writeln!(
            out,
            "classifier macro-F: dev {:.4}, test {:.4}",
            m.dev.macro_f, m.test.macro_f
        );
    }
    if let Some(s) = &state.saliency {
        let _ = writeln!(
            out,
            "saliency: {} zero-gradient entries over {} x {}",
            s.zero_gradient_entries, s.instances, s.features
        );
    }
    if let Some(sel) = &state.selected {
        let preview: Vec<&str> = sel.iter().take(10).map(String::as_str).collect();
        let _ = writeln!(out, "selected {} features: {} ...", sel.len(), preview.join(" "));
    }
    if let Some(f) = &state.fidelity {
        for c in &f.fidelity.per_class {
            let _ = writeln!(
                out,
                "{:<24} P {:.4}  R {:.4}  F {:.4}",
                c.class, c.precision, c.recall, c.f_score
            );
        }
        let _ = writeln!(
            out,
            "macro fidelity: P {:.4}  R {:.4}  F {:.4}",
            f.fidelity.macro_precision, f.fidelity.macro_recall, f.fidelity.macro_f
        );
    }
    if show_consistency {
        if let Some(c) = &state.consistency {
            for row in &c.per_class {
                let _ = writeln!(
                    out,
                    "{:<24} rule match {:.1}%  overlap {:.1}%  ({} compared)",
                    row.class, row.rule_match, row.classification_overlap, row.compared
                );
            }
            let _ = writeln!(
                out,
                "mean rule match {:.1}%, mean classification overlap {:.1}%",
                c.mean_rule_match, c.mean_classification_overlap
            );
        }
    }
}

fn run_stage(args: &RunArgs, stage: Stage, show_consistency: bool) -> Result<(), Failure> {
    let config = args.run_config()?;
    let out = config.out.clone().expect("checked in run_config");
    init_logging(&out)?;
    log::info!("running through {stage:?}");
    let state = run_until(&config, stage).map_err(|e| match e {
        Error::Config(_) => Failure::usage(e),
        other => Failure::Runtime(other.into()),
    })?;
    print_state(&state, show_consistency);
    Ok(())
}

fn render(file: &Path) -> Result<(), Failure> {
    let text =
        fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let doc = RuleSetDoc::from_json(&text)
        .with_context(|| format!("parsing {}", file.display()))?;
    print!("{}", doc.render());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Featurize(a) => run_stage(a, Stage::Featurize, false),
        Command::Train(a) => run_stage(a, Stage::Train, false),
        Command::Saliency(a) => run_stage(a, Stage::Saliency, false),
        Command::Select(a) => run_stage(a, Stage::Select, false),
        Command::Induce(a) => run_stage(a, Stage::Induce, false),
        Command::Explain(a) => run_stage(a, Stage::Induce, true),
        Command::Consistency(a) => run_stage(a, Stage::Induce, true),
        Command::Render { file } => render(file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
