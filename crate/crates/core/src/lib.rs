//! Global explanations of feedforward text classifiers as if-then-else
//! rule-sets.
//!
//! The pipeline featurizes a labeled corpus with TF-IDF, trains a ReLU
//! network, reweighs every input by the gradient of a chosen output,
//! reduces the result to `{-1, 0, +1}`, keeps the top-k features and
//! induces one-vs-rest RIPPER-k rule-sets that mimic the network.

pub mod config;
pub mod corpus;
pub mod error;
pub mod explain;
pub mod net;
pub mod ripper;
pub mod select;
pub mod sparse;
pub mod synth;
pub mod transform;

pub use config::{Mode, RunConfig};
pub use corpus::{Document, Vocabulary};
pub use error::{Error, Result};
pub use explain::{run_pipeline, ExplanationBundle, FidelityReport, MinCoverGrid};
pub use net::{NetworkConfig, Prediction, TrainedNetwork};
pub use ripper::{apply_ruleset, Condition, Dataset, FeatureKind, Firing, RipperConfig, Rule, RuleSet};
pub use select::{FeatureScores, SelectionMethod, SelectionResult};
pub use sparse::{FeatureMatrix, SparseRow};
pub use transform::{SaliencyMode, SignMatrix};
