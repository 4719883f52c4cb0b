//! Fidelity and consistency metrics, the hyperparameter sweep and the
//! end-to-end pipeline.

mod consistency;
mod metrics;
mod pipeline;
mod sweep;

pub use consistency::{
    classification_overlap, consistency, rule_match, ClassConsistency, ConsistencyReport,
};
pub use metrics::{
    class_fidelity, fidelity, multiclass_scores, BinaryScores, ClassScores, FidelityReport,
};
pub use pipeline::{
    load_features, run_pipeline, run_until, save_features, PipelineState, Stage, select_features, selected_names,
    transformed_signs, ClassSelection, ExplanationBundle, FidelitySummary, ModelEvaluation,
    SaliencyStats,
};
pub use sweep::{
    sweep, ClassSweep, MinCoverGrid, SweepCell, SweepResult, MIN_COVER_LADDER,
    WELL_PERFORMING_MARGIN,
};
