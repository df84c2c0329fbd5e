use serde::{Deserialize, Serialize};

use super::config::check_weights;
use crate::data::SubsetView;
use crate::error::{dim_err, invalid, Error, Result};
use crate::nn::{predict_proba, TrainedModel};
use crate::tensor::{argmax, Tensor};
use crate::train::{evaluate_probs, view_proba, Evaluation};

/// Where one cascade member came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageProvenance {
    pub stage: usize,
    /// Threshold that selected this stage's training subset; none for the primary.
    pub threshold: Option<f64>,
    pub subset_size: usize,
    pub model_id: String,
    pub parent_id: Option<String>,
}

/// Built cascade members and their normalized weights.
#[derive(Debug, Clone)]
pub struct CascadeEnsemble {
    models: Vec<TrainedModel>,
    weights: Vec<f64>,
    provenance: Vec<StageProvenance>,
}

impl CascadeEnsemble {
    /// Normalizes `raw_weights` to sum to one.
    pub fn new(models: Vec<TrainedModel>, raw_weights: &[f64], provenance: Vec<StageProvenance>) -> Result<Self> {
        check_weights(raw_weights)?;
        let total: f64 = raw_weights.iter().sum();
        let weights = raw_weights.iter().map(|b| b / total).collect();
        Self::from_normalized(models, weights, provenance)
    }

    /// Takes weights that already sum to one (as stored in a bundle).
    pub(crate) fn from_normalized(
        models: Vec<TrainedModel>,
        weights: Vec<f64>,
        provenance: Vec<StageProvenance>,
    ) -> Result<Self> {
        check_weights(&weights)?;
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("ensemble weights are not normalized");
        }
        if models.is_empty() || models.len() != weights.len() || models.len() != provenance.len() {
            return Err(Error::Consistency(format!(
                "{} models, {} weights, {} provenance entries",
                models.len(),
                weights.len(),
                provenance.len()
            )));
        }
        let first = &models[0].spec;
        for (i, m) in models.iter().enumerate().skip(1) {
            if m.spec.input_shape != first.input_shape || m.spec.num_classes != first.num_classes {
                return Err(Error::Consistency(format!(
                    "model {i} has input {:?} / {} classes, primary has {:?} / {}",
                    m.spec.input_shape, m.spec.num_classes, first.input_shape, first.num_classes
                )));
            }
        }
        Ok(CascadeEnsemble { models, weights, provenance })
    }

    pub fn models(&self) -> &[TrainedModel] {
        &self.models
    }

    pub fn primary(&self) -> &TrainedModel {
        &self.models[0]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn provenance(&self) -> &[StageProvenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.models[0].num_classes()
    }

    fn combine(&self, mut member_proba: impl FnMut(&TrainedModel) -> Result<Tensor>) -> Result<Tensor> {
        let mut acc: Option<Tensor> = None;
        for (model, &beta) in self.models.iter().zip(&self.weights) {
            let p = member_proba(model)?;
            let acc = acc.get_or_insert_with(|| Tensor::zeros(p.shape()));
            for (a, v) in acc.data_mut().iter_mut().zip(p.data()) {
                *a += beta * v;
            }
        }
        Ok(acc.expect("ensemble has at least one model"))
    }
}

/// Weighted sum of member probabilities, `b × n`.
pub fn ensemble_proba(ens: &CascadeEnsemble, batch: &Tensor) -> Result<Tensor> {
    ens.combine(|m| predict_proba(m, batch))
}

/// Row-wise argmax of [`ensemble_proba`]; ties go to the lowest class index.
pub fn ensemble_predict(ens: &CascadeEnsemble, batch: &Tensor) -> Result<Vec<usize>> {
    Ok(ensemble_proba(ens, batch)?.rows().map(argmax).collect())
}

/// Ensemble probabilities for every sample of a view, in view order.
pub fn ensemble_view_proba(ens: &CascadeEnsemble, view: &SubsetView<'_>) -> Result<Tensor> {
    ens.combine(|m| view_proba(m, view))
}

/// Weighted sum of precomputed member probabilities, one tensor per model in
/// ensemble order. Matches [`ensemble_view_proba`] bit for bit.
pub fn combine_member_proba(ens: &CascadeEnsemble, member: &[Tensor]) -> Result<Tensor> {
    if member.len() != ens.len() {
        return invalid(format!("expected {} member probability tensors, got {}", ens.len(), member.len()));
    }
    let shape = member[0].shape();
    if member.iter().any(|p| p.shape() != shape) {
        return dim_err("member probability shapes differ");
    }
    let mut it = member.iter();
    ens.combine(|_| Ok(it.next().expect("length checked").clone()))
}

pub fn evaluate_ensemble(ens: &CascadeEnsemble, view: &SubsetView<'_>) -> Result<Evaluation> {
    evaluate_probs(&ensemble_view_proba(ens, view)?, &view.labels())
}
