//! Confidence-filtered cascades of complementary models and their weighted
//! ensemble.

mod build;
mod bundle;
mod config;
mod ensemble;

pub use build::{filter_low_confidence, train_cascade, tune_thresholds, CandidateResult, StageRecord, TuneOutcome};
pub use bundle::{load_bundle, save_bundle, CascadeBundle, BUNDLE_MANIFEST};
pub use config::{CascadeConfig, StageOverride, DEFAULT_MIN_SUBSET_SIZE};
pub use ensemble::{
    combine_member_proba, ensemble_predict, ensemble_proba, ensemble_view_proba, evaluate_ensemble, CascadeEnsemble,
    StageProvenance,
};
