use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::score::ConfidenceRecord;
use crate::error::{invalid, Result};

/// Histogram of confidence scores, split by correctness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    /// `bins + 1` edges over `[0, 1]`.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub error_counts: Vec<usize>,
    pub low_threshold: f64,
    pub total: usize,
    pub errors: usize,
    /// Samples with `cs >= low_threshold`.
    pub confident: usize,
    /// Misclassified samples with `cs < low_threshold`.
    pub errors_below: usize,
    /// `errors_below / errors`; absent when nothing was misclassified.
    pub fraction_errors_below: Option<f64>,
}

impl ConfidenceReport {
    pub fn accuracy(&self) -> f64 {
        (self.total - self.errors) as f64 / self.total as f64
    }

    pub fn confident_fraction(&self) -> f64 {
        self.confident as f64 / self.total as f64
    }

    /// `bin_low,bin_high,count,error_count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count,error_count\n");
        for i in 0..self.counts.len() {
            let _ = writeln!(
                out,
                "{:.4},{:.4},{},{}",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                self.counts[i],
                self.error_counts[i]
            );
        }
        out
    }
}

/// Buckets records into `bins` equal-width bins over `[0, 1]`; a score of
/// exactly 1 lands in the last bin.
pub fn build_report(records: &[ConfidenceRecord], bins: usize, low_threshold: f64) -> Result<ConfidenceReport> {
    if bins < 2 {
        return invalid(format!("need at least 2 bins, got {bins}"));
    }
    if !(0.0..=1.0).contains(&low_threshold) {
        return invalid(format!("low threshold {low_threshold} outside [0, 1]"));
    }
    let bin_edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    let mut error_counts = vec![0; bins];
    let (mut errors, mut confident, mut errors_below) = (0, 0, 0);
    for r in records {
        let bin = ((r.cs * bins as f64).floor() as usize).min(bins - 1);
        counts[bin] += 1;
        if r.cs >= low_threshold {
            confident += 1;
        }
        if !r.correct {
            error_counts[bin] += 1;
            errors += 1;
            if r.cs < low_threshold {
                errors_below += 1;
            }
        }
    }
    Ok(ConfidenceReport {
        bin_edges,
        counts,
        error_counts,
        low_threshold,
        total: records.len(),
        errors,
        confident,
        errors_below,
        fraction_errors_below: (errors > 0).then(|| errors_below as f64 / errors as f64),
    })
}
