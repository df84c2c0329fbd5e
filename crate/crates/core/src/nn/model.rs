use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::{LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

/// Named parameter (or gradient) tensors, keyed `"<layer:03>.<kind>.<weight|bias>"`.
pub type ParamSet = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Short digest of the parameters this model was last saved or trained with.
    pub id: String,
    pub parent_id: Option<String>,
    pub seed: u64,
    pub epochs: usize,
    pub val_accuracy: Option<f64>,
}

/// A model specification together with its learned parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ParamSet,
    pub metadata: ModelMetadata,
}

impl TrainedModel {
    /// He-normal weights and zero biases drawn from `seed`'s init stream.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        let mut rng = Rng::with_stream(seed, stream::INIT);
        let mut params = ParamSet::new();
        for (name, shape) in shapes {
            let tensor = if name.ends_with(".weight") {
                let fan_in: usize = match shape.len() {
                    4 => shape[1] * shape[2] * shape[3],
                    _ => shape[0],
                };
                let std = (2.0 / fan_in as f64).sqrt();
                let n = shape.iter().product();
                Tensor::new(shape, (0..n).map(|_| rng.normal() * std).collect())?
            } else {
                Tensor::zeros(&shape)
            };
            params.insert(name, tensor);
        }
        let id = params_digest(&params);
        Ok(TrainedModel {
            spec,
            params,
            metadata: ModelMetadata { id, parent_id: None, seed, epochs: 0, val_accuracy: None },
        })
    }

    /// Builds a model from explicit parameters, checking them against the spec.
    pub fn from_params(spec: ModelSpec, params: ParamSet, metadata: ModelMetadata) -> Result<Self> {
        let model = TrainedModel { spec, params, metadata };
        model.check_params()?;
        Ok(model)
    }

    /// Every parameterized layer has exactly one correctly shaped entry, and
    /// nothing else is present.
    pub fn check_params(&self) -> Result<()> {
        let expected = self.spec.param_shapes()?;
        if expected.len() != self.params.len() {
            return Err(Error::Validation(format!(
                "spec implies {} parameter tensors, found {}",
                expected.len(),
                self.params.len()
            )));
        }
        for (name, shape) in expected {
            match self.params.get(&name) {
                None => return Err(Error::Validation(format!("missing parameter tensor {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Validation(format!(
                        "parameter {name} has shape {:?}, spec implies {shape:?}",
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over parameter names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        params_checksum(&self.params)
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }
}

pub(crate) fn params_checksum(params: &ParamSet) -> String {
    let mut h = Sha256::new();
    for (name, t) in params {
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn params_digest(params: &ParamSet) -> String {
    params_checksum(params)[..16].to_string()
}

/// Copies `parent`'s parameters into a new model with `child_spec`.
///
/// The specs must agree on input shape, class count, layer kinds and every
/// parameter shape; hyperparameters without parameters (dropout rates) may
/// differ.
pub fn transfer_weights(parent: &TrainedModel, child_spec: &ModelSpec) -> Result<TrainedModel> {
    let mismatch = |msg: String| Err(Error::Transfer(msg));
    if parent.spec.input_shape != child_spec.input_shape {
        return mismatch(format!(
            "input shape {:?} differs from parent {:?}",
            child_spec.input_shape, parent.spec.input_shape
        ));
    }
    if parent.spec.num_classes != child_spec.num_classes {
        return mismatch(format!(
            "num_classes {} differs from parent {}",
            child_spec.num_classes, parent.spec.num_classes
        ));
    }
    child_spec.validate()?;
    let parent_layers = &parent.spec.layers;
    for i in 0..parent_layers.len().max(child_spec.layers.len()) {
        let (p, c) = (parent_layers.get(i), child_spec.layers.get(i));
        let same = match (p, c) {
            (Some(LayerSpec::Dropout { .. }), Some(LayerSpec::Dropout { .. })) => true,
            (Some(a), Some(b)) => a == b,
            _ => false,
        };
        if !same {
            let show = |l: Option<&LayerSpec>| l.map_or("<none>".to_string(), |l| format!("{l:?}"));
            return mismatch(format!("layer {i} mismatch: parent {} vs child {}", show(p), show(c)));
        }
    }
    let mut child = TrainedModel {
        spec: child_spec.clone(),
        params: parent.params.clone(),
        metadata: ModelMetadata {
            id: parent.metadata.id.clone(),
            parent_id: Some(parent.metadata.id.clone()),
            seed: parent.metadata.seed,
            epochs: 0,
            val_accuracy: None,
        },
    };
    child.check_params()?;
    child.metadata.id = params_digest(&child.params);
    Ok(child)
}
