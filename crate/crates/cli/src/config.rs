//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use complens::cascade::CascadeConfig;
use complens::confidence::{DEFAULT_ATTENTION_SAMPLES, DEFAULT_BINS, DEFAULT_LOW_THRESHOLD};
use complens::data::AugmentOps;
use complens::nn::{LayerSpec, ModelSpec};
use complens::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const REFERENCE_PRESET: &str = "reference_cnn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset label used in the summary table.
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub augment: Option<AugmentOps>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub tune: Option<TuneConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

/// Exactly one source: an IDX image/label pair or a class-per-folder PNG tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub image_dir: Option<PathBuf>,
    /// `[height, width]` every image is resized to; image directories only.
    pub target_size: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSource<'a> {
    Idx { images: &'a Path, labels: &'a Path },
    ImageDir { root: &'a Path, target: (usize, usize) },
}

impl DatasetConfig {
    pub fn source(&self) -> Result<DatasetSource<'_>, CliError> {
        match (&self.idx_images, &self.idx_labels, &self.image_dir) {
            (Some(images), Some(labels), None) => {
                if self.target_size.is_some() {
                    return Err(field("dataset.target_size", "only applies to image_dir datasets"));
                }
                Ok(DatasetSource::Idx { images, labels })
            }
            (None, None, Some(root)) => match self.target_size {
                Some([h, w]) if h > 0 && w > 0 => Ok(DatasetSource::ImageDir { root, target: (h, w) }),
                Some(_) => Err(field("dataset.target_size", "extents must be positive")),
                None => Err(field("dataset.target_size", "required for image_dir datasets")),
            },
            (Some(_), None, None) => Err(field("dataset.idx_labels", "required together with idx_images")),
            (None, Some(_), None) => Err(field("dataset.idx_images", "required together with idx_labels")),
            (None, None, None) => Err(field("dataset", "set either idx_images + idx_labels or image_dir")),
            _ => Err(field("dataset", "idx files and image_dir are mutually exclusive")),
        }
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.idx_images, &mut self.idx_labels, &mut self.image_dir].into_iter().flatten() {
            *p = base.join(&*p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Train, validation and test fractions; must sum to 1.
    pub fractions: [f64; 3],
    pub seed: u64,
    /// Keep only the first `n` training samples (after shuffling).
    pub train_limit: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { fractions: [0.8, 0.1, 0.1], seed: 0, train_limit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub preset: Option<String>,
    /// Inline layer list; input shape and class count come from the data.
    #[serde(default)]
    pub layers: Option<Vec<LayerSpec>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { preset: Some(REFERENCE_PRESET.into()), layers: None }
    }
}

impl ModelConfig {
    /// Name shown in the summary table.
    pub fn label(&self) -> &str {
        self.preset.as_deref().unwrap_or("custom")
    }

    pub fn build(&self, input_shape: [usize; 3], num_classes: usize) -> Result<ModelSpec, CliError> {
        let spec = match (&self.preset, &self.layers) {
            (Some(p), None) if p == REFERENCE_PRESET => ModelSpec::reference_cnn(input_shape, num_classes),
            (Some(p), None) => return Err(field("model.preset", format!("unknown preset {p:?}"))),
            (None, Some(layers)) => ModelSpec { input_shape, num_classes, layers: layers.clone() },
            (None, None) => return Err(field("model", "set preset or layers")),
            (Some(_), Some(_)) => return Err(field("model", "preset and layers are mutually exclusive")),
        };
        spec.validate().map_err(|e| field("model.layers", e))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    /// Candidate threshold vectors, one per cascade to try.
    pub grid: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub low_threshold: f64,
    pub bins: usize,
    pub attention: Option<AttentionConfig>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { low_threshold: DEFAULT_LOW_THRESHOLD, bins: DEFAULT_BINS, attention: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    /// Classes to map; empty means all.
    pub classes: Vec<usize>,
    pub samples: usize,
    pub patch: usize,
    pub stride: usize,
    pub seed: u64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig { classes: Vec::new(), samples: DEFAULT_ATTENTION_SAMPLES, patch: 4, stride: 2, seed: 0 }
    }
}

fn field(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {message}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!("{path}: {}", inner.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.resolve(base);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(field("name", "must not be empty"));
        }
        self.dataset.source()?;
        let [a, b, c] = self.split.fractions;
        if [a, b, c].iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(field("split.fractions", "each fraction must be positive"));
        }
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(field("split.fractions", format!("sum to {}, expected 1", a + b + c)));
        }
        if self.split.train_limit == Some(0) {
            return Err(field("split.train_limit", "must be ≥ 1"));
        }
        if self.model.preset.is_some() == self.model.layers.is_some() {
            return Err(field("model", "set exactly one of preset or layers"));
        }
        self.train.validate().map_err(|e| field("train", e))?;
        self.cascade.validate().map_err(|e| field("cascade", e))?;
        if let Some(t) = &self.tune {
            if t.grid.is_empty() {
                return Err(field("tune.grid", "must list at least one candidate"));
            }
            for (i, alphas) in t.grid.iter().enumerate() {
                let candidate = CascadeConfig {
                    num_complementary: alphas.len(),
                    thresholds: alphas.clone(),
                    ..self.cascade.clone()
                };
                candidate.validate().map_err(|e| field(&format!("tune.grid[{i}]"), e))?;
            }
        }
        let a = &self.analysis;
        if !(0.0..=1.0).contains(&a.low_threshold) {
            return Err(field("analysis.low_threshold", "must lie in [0, 1]"));
        }
        if a.bins < 2 {
            return Err(field("analysis.bins", "must be ≥ 2"));
        }
        if let Some(att) = &a.attention {
            if att.patch == 0 || att.stride == 0 || att.samples == 0 {
                return Err(field("analysis.attention", "patch, stride and samples must be ≥ 1"));
            }
        }
        Ok(())
    }
}
