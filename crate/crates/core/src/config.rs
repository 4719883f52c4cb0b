//! Run configuration: a flat `key=value` file that command-line flags
//! override.

use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::MinCoverGrid;
use crate::net::NetworkConfig;
use crate::select::SelectionMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Explain the network's predictions on the test split.
    TestPredictions,
    /// Gold training labels over the original TF-IDF inputs.
    TrainGoldOriginal,
    /// Gold training labels over inputs reweighed by gold-class gradients.
    TrainGoldTransformed,
}

impl Mode {
    pub const ALL: [Mode; 3] = [
        Mode::TestPredictions,
        Mode::TrainGoldOriginal,
        Mode::TrainGoldTransformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TestPredictions => "test-preds",
            Mode::TrainGoldOriginal => "train-gold-original",
            Mode::TrainGoldTransformed => "train-gold-transformed",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

pub fn parse_selector(s: &str) -> Result<SelectionMethod> {
    match s {
        "sa" => Ok(SelectionMethod::Sensitivity),
        "mi" => Ok(SelectionMethod::MutualInformation),
        _ => Err(Error::Config(format!("unknown selector {s:?} (expected sa or mi)"))),
    }
}

pub fn selector_name(m: SelectionMethod) -> &'static str {
    match m {
        SelectionMethod::Sensitivity => "sa",
        SelectionMethod::MutualInformation => "mi",
    }
}

/// `full` or a comma-separated list of positive integers.
pub fn parse_min_cover_grid(s: &str) -> Result<MinCoverGrid> {
    if s == "full" {
        return Ok(MinCoverGrid::Full);
    }
    let values = parse_list::<usize>(s, "min_cover_grid")?;
    if values.is_empty() || values.contains(&0) {
        return Err(Error::Config("min_cover_grid needs positive values".into()));
    }
    Ok(MinCoverGrid::Values(values))
}

fn parse_list<T: FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} in {key}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: Mode,
    pub selector: SelectionMethod,
    pub k: usize,
    pub network: NetworkConfig,
    /// Number of RIPPER seeds; the seeds are `seed, seed+1, ...`.
    pub seeds: usize,
    pub min_cover_grid: MinCoverGrid,
    pub optimizations: usize,
    pub grow_fraction: f64,
    /// Turn original inputs into 0/1 presence features (train-gold-original).
    pub binarize_original: bool,
    pub jobs: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            out: None,
            mode: Mode::TestPredictions,
            selector: SelectionMethod::MutualInformation,
            k: 1000,
            network: NetworkConfig::default(),
            seeds: 10,
            min_cover_grid: MinCoverGrid::default(),
            optimizations: 2,
            grow_fraction: 2.0 / 3.0,
            binarize_original: false,
            jobs: 0,
            seed: 1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "corpus",
    "out",
    "mode",
    "selector",
    "k",
    "seeds",
    "min_cover_grid",
    "optimizations",
    "grow_fraction",
    "binarize_original",
    "jobs",
    "seed",
    "hidden",
    "epochs",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "batch_size",
];

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "mode" => self.mode = value.parse()?,
            "selector" => self.selector = parse_selector(value)?,
            "k" => self.k = num(key, value)?,
            "seeds" => self.seeds = num(key, value)?,
            "min_cover_grid" => self.min_cover_grid = parse_min_cover_grid(value)?,
            "optimizations" => self.optimizations = num(key, value)?,
            "grow_fraction" => self.grow_fraction = num(key, value)?,
            "binarize_original" => self.binarize_original = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "hidden" => self.network.hidden = parse_list(value, key)?,
            "epochs" => self.network.epochs = num(key, value)?,
            "learning_rate" => self.network.learning_rate = num(key, value)?,
            "beta1" => self.network.beta1 = num(key, value)?,
            "beta2" => self.network.beta2 = num(key, value)?,
            "epsilon" => self.network.epsilon = num(key, value)?,
            "batch_size" => self.network.batch_size = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_str_kv(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_str(text)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be >= 1".into()));
        }
        if self.optimizations > 5 {
            return Err(Error::Config("optimizations must be in 0..=5".into()));
        }
        if !(self.grow_fraction > 0.0 && self.grow_fraction < 1.0) {
            return Err(Error::Config("grow_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn ripper_seeds(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            seed: self.seed,
            ..self.network.clone()
        }
    }

    /// Canonical `key=value` rendering; parsing it gives back `self`.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        if let Some(c) = &self.corpus {
            let _ = writeln!(out, "corpus={}", c.display());
        }
        if let Some(o) = &self.out {
            let _ = writeln!(out, "out={}", o.display());
        }
        let grid = match &self.min_cover_grid {
            MinCoverGrid::Full => "full".to_string(),
            MinCoverGrid::Values(v) => join(v),
        };
        let n = &self.network;
        let _ = writeln!(out, "mode={}", self.mode);
        let _ = writeln!(out, "selector={}", selector_name(self.selector));
        let _ = writeln!(out, "k={}", self.k);
        let _ = writeln!(out, "seeds={}", self.seeds);
        let _ = writeln!(out, "min_cover_grid={grid}");
        let _ = writeln!(out, "optimizations={}", self.optimizations);
        let _ = writeln!(out, "grow_fraction={:?}", self.grow_fraction);
        let _ = writeln!(out, "binarize_original={}", self.binarize_original);
        let _ = writeln!(out, "jobs={}", self.jobs);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "hidden={}", join(&n.hidden));
        let _ = writeln!(out, "epochs={}", n.epochs);
        let _ = writeln!(out, "learning_rate={:?}", n.learning_rate);
        let _ = writeln!(out, "beta1={:?}", n.beta1);
        let _ = writeln!(out, "beta2={:?}", n.beta2);
        let _ = writeln!(out, "epsilon={:?}", n.epsilon);
        let _ = writeln!(out, "batch_size={}", n.batch_size);
        out
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
