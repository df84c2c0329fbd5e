use serde::{Deserialize, Serialize};

use crate::data::SubsetView;
use crate::error::{invalid, Result};
use crate::nn::TrainedModel;
use crate::tensor::{argmax, Tensor};
use crate::train::view_proba;

/// Gap between the largest and second-largest class probability.
///
/// Inputs whose sum is off by more than `1e-6` are renormalized first.
pub fn confidence_score(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        return invalid(format!("confidence score needs at least two classes, got {}", probs.len()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return invalid("probabilities must be finite and non-negative");
    }
    let sum: f64 = probs.iter().sum();
    if sum <= 0.0 {
        return invalid("probabilities sum to zero");
    }
    let scale = if (sum - 1.0).abs() > 1e-6 { 1.0 / sum } else { 1.0 };
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        let p = p * scale;
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    Ok((first - second).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    /// Index into the underlying dataset.
    pub sample_index: usize,
    /// Class probabilities in ascending order.
    pub sorted_probs: Vec<f64>,
    pub predicted_class: usize,
    pub cs: f64,
    pub true_label: usize,
    pub correct: bool,
}

impl ConfidenceRecord {
    pub fn from_probs(sample_index: usize, probs: &[f64], true_label: usize) -> Result<Self> {
        let cs = confidence_score(probs)?;
        let mut sorted_probs = probs.to_vec();
        sorted_probs.sort_by(f64::total_cmp);
        let predicted_class = argmax(probs);
        Ok(ConfidenceRecord {
            sample_index,
            sorted_probs,
            predicted_class,
            cs,
            true_label,
            correct: predicted_class == true_label,
        })
    }
}

/// One record per row of `probs`, paired with the view's indices and labels.
pub fn records_from_probs(probs: &Tensor, view: &SubsetView<'_>) -> Result<Vec<ConfidenceRecord>> {
    if probs.shape().len() != 2 || probs.shape()[0] != view.len() {
        return Err(crate::Error::Dimension(format!(
            "probabilities {:?} do not match a view of {} samples",
            probs.shape(),
            view.len()
        )));
    }
    probs
        .rows()
        .enumerate()
        .map(|(pos, row)| ConfidenceRecord::from_probs(view.indices()[pos], row, view.label(pos)))
        .collect()
}

/// Scores every sample of the view with `model`, in view order.
pub fn score_dataset(model: &TrainedModel, view: &SubsetView<'_>) -> Result<Vec<ConfidenceRecord>> {
    if view.is_empty() {
        return invalid("cannot score an empty view");
    }
    records_from_probs(&view_proba(model, view)?, view)
}
