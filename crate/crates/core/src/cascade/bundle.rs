//! A cascade on disk: `cascade.json` plus `model_{i}.cens` per built stage.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::build::StageRecord;
use super::config::CascadeConfig;
use super::ensemble::{CascadeEnsemble, StageProvenance};
use crate::error::{Error, Result};
use crate::nn::{load_model, save_model};

pub const BUNDLE_MANIFEST: &str = "cascade.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    config: CascadeConfig,
    weights: Vec<f64>,
    provenance: Vec<StageProvenance>,
    stages: Vec<StageRecord>,
    models: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CascadeBundle {
    pub ensemble: CascadeEnsemble,
    pub config: CascadeConfig,
    pub stages: Vec<StageRecord>,
}

fn model_file(i: usize) -> String {
    format!("model_{i}.cens")
}

/// Writes the bundle into `dir`, creating it if needed.
pub fn save_bundle(
    dir: impl AsRef<Path>,
    ensemble: &CascadeEnsemble,
    config: &CascadeConfig,
    stages: &[StageRecord],
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut models = Vec::with_capacity(ensemble.len());
    for (i, m) in ensemble.models().iter().enumerate() {
        let name = model_file(i);
        save_model(m, dir.join(&name))?;
        models.push(name);
    }
    let manifest = Manifest {
        config: config.clone(),
        weights: ensemble.weights().to_vec(),
        provenance: ensemble.provenance().to_vec(),
        stages: stages.to_vec(),
        models,
    };
    fs::write(dir.join(BUNDLE_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<CascadeBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(BUNDLE_MANIFEST);
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Decode { path: manifest_path.clone(), message: e.to_string() })?;
    let mut models = Vec::with_capacity(manifest.models.len());
    for (name, prov) in manifest.models.iter().zip(&manifest.provenance) {
        if name.contains(['/', '\\']) || name == ".." {
            return Err(Error::Decode {
                path: manifest_path,
                message: format!("model path {name:?} leaves the bundle"),
            });
        }
        let path = dir.join(name);
        let model = load_model(&path).map_err(|e| Error::Decode { path: path.clone(), message: e.to_string() })?;
        if model.metadata.id != prov.model_id {
            return Err(Error::Consistency(format!(
                "{} has id {} but the manifest expects {}",
                path.display(),
                model.metadata.id,
                prov.model_id
            )));
        }
        models.push(model);
    }
    if models.len() != manifest.models.len() {
        return Err(Error::Consistency("manifest lists more models than provenance entries".into()));
    }
    let ensemble = CascadeEnsemble::from_normalized(models, manifest.weights, manifest.provenance)?;
    Ok(CascadeBundle { ensemble, config: manifest.config, stages: manifest.stages })
}
