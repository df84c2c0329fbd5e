//! Prediction confidence: the top-two probability gap, histograms of it, and
//! occlusion attention maps.

mod attention;
mod report;
mod score;

pub use attention::{class_mean_attention, occlusion_attention_map, to_pgm, upsample_occlusion_map, OCCLUDER_VALUE};
pub use report::{build_report, ConfidenceReport};
pub use score::{confidence_score, records_from_probs, score_dataset, ConfidenceRecord};

/// Scores at or below this are "low confidence" unless configured otherwise.
pub const DEFAULT_LOW_THRESHOLD: f64 = 0.9;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_ATTENTION_SAMPLES: usize = 500;
