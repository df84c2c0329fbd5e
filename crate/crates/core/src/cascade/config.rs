use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::train::TrainConfig;

pub const DEFAULT_MIN_SUBSET_SIZE: usize = 100;

/// Replaces the training configuration of one cascade stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageOverride {
    pub stage: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    /// Number of complementary models after the primary.
    pub num_complementary: usize,
    /// `thresholds[i]` selects the training subset of stage `i + 1`.
    pub thresholds: Vec<f64>,
    /// One weight per model; uniform when absent.
    pub ensemble_weights: Option<Vec<f64>>,
    /// Stages whose subset is smaller than this are skipped with all later ones.
    pub min_subset_size: usize,
    pub stage_overrides: Vec<StageOverride>,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            num_complementary: 0,
            thresholds: Vec::new(),
            ensemble_weights: None,
            min_subset_size: DEFAULT_MIN_SUBSET_SIZE,
            stage_overrides: Vec::new(),
        }
    }
}

impl CascadeConfig {
    /// `m` complementary stages, one per threshold, uniform weights.
    pub fn with_thresholds(thresholds: Vec<f64>) -> Self {
        CascadeConfig { num_complementary: thresholds.len(), thresholds, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_complementary;
        if self.thresholds.len() != m {
            return invalid(format!("{} thresholds given for {m} complementary stages", self.thresholds.len()));
        }
        for (i, &a) in self.thresholds.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0) {
                return invalid(format!("threshold {i} is {a}, must lie in (0, 1]"));
            }
        }
        if let Some(w) = &self.ensemble_weights {
            if w.len() != m + 1 {
                return invalid(format!("{} ensemble weights given for {} models", w.len(), m + 1));
            }
            check_weights(w)?;
        }
        if self.min_subset_size == 0 {
            return invalid("min_subset_size must be ≥ 1");
        }
        let mut seen = vec![false; m + 1];
        for o in &self.stage_overrides {
            if o.stage > m {
                return invalid(format!("override for stage {} but the cascade has {} stages", o.stage, m + 1));
            }
            if std::mem::replace(&mut seen[o.stage], true) {
                return invalid(format!("stage {} overridden twice", o.stage));
            }
            o.train.validate()?;
        }
        Ok(())
    }

    /// Training configuration for `stage`: the override if present, else
    /// `base` with its seed offset by the stage index.
    pub fn stage_train_config(&self, base: &TrainConfig, stage: usize) -> TrainConfig {
        match self.stage_overrides.iter().find(|o| o.stage == stage) {
            Some(o) => o.train.clone(),
            None => TrainConfig { seed: base.seed.wrapping_add(stage as u64), ..base.clone() },
        }
    }

    /// Raw (unnormalized) weights for all `m + 1` models.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.ensemble_weights.clone().unwrap_or_else(|| vec![1.0; self.num_complementary + 1])
    }
}

pub(crate) fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return invalid("no ensemble weights");
    }
    if w.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return invalid("ensemble weights must be finite and non-negative");
    }
    if w.iter().all(|&b| b == 0.0) {
        return invalid("ensemble weights are all zero");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_must_agree() {
        let mut c = CascadeConfig::with_thresholds(vec![0.9]);
        assert!(c.validate().is_ok());
        c.num_complementary = 2;
        assert!(c.validate().is_err());
        c = CascadeConfig::with_thresholds(vec![0.9]);
        c.ensemble_weights = Some(vec![1.0]);
        assert!(c.validate().is_err());
        c.ensemble_weights = Some(vec![0.0, 0.0]);
        assert!(c.validate().is_err());
        c.ensemble_weights = Some(vec![0.0, 2.0]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn threshold_range() {
        assert!(CascadeConfig::with_thresholds(vec![1.0]).validate().is_ok());
        assert!(CascadeConfig::with_thresholds(vec![0.0]).validate().is_err());
        assert!(CascadeConfig::with_thresholds(vec![1.01]).validate().is_err());
    }

    #[test]
    fn stage_seeds_and_overrides() {
        let base = TrainConfig { seed: 10, ..Default::default() };
        let mut c = CascadeConfig::with_thresholds(vec![0.9, 0.8]);
        assert_eq!(c.stage_train_config(&base, 0).seed, 10);
        assert_eq!(c.stage_train_config(&base, 2).seed, 12);
        c.stage_overrides.push(StageOverride { stage: 1, train: TrainConfig { epochs: 1, ..Default::default() } });
        assert_eq!(c.stage_train_config(&base, 1).epochs, 1);
        assert_eq!(c.stage_train_config(&base, 1).seed, 0);
        c.stage_overrides.push(StageOverride { stage: 3, train: TrainConfig::default() });
        assert!(c.validate().is_err());
    }
}
