use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::CascadeConfig;
use super::ensemble::{evaluate_ensemble, CascadeEnsemble, StageProvenance};
use crate::confidence::confidence_score;
use crate::data::SubsetView;
use crate::error::{invalid, Error, Result};
use crate::nn::{transfer_weights, ModelSpec, TrainedModel};
use crate::train::{train, view_proba, ModelInit, TrainConfig, TrainReport};

/// Audit entry for one cascade stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    /// Threshold applied to the parent's subset; none for the primary.
    pub threshold: Option<f64>,
    /// Size of this stage's training subset; none when an earlier stage was
    /// already skipped and the subset was never computed.
    pub subset_size: Option<usize>,
    pub report: Option<TrainReport>,
    pub skipped: bool,
    /// SHA-256 prefix over the subset's dataset indices.
    pub subset_checksum: Option<String>,
}

/// Samples of `view` whose confidence score under `model` is at most `alpha`,
/// in view order.
pub fn filter_low_confidence<'a>(model: &TrainedModel, view: &SubsetView<'a>, alpha: f64) -> Result<SubsetView<'a>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid(format!("threshold {alpha} outside (0, 1]"));
    }
    if view.is_empty() {
        return Ok(view.clone());
    }
    let probs = view_proba(model, view)?;
    let keep = probs.rows().map(|row| confidence_score(row).map(|cs| cs <= alpha)).collect::<Result<Vec<bool>>>()?;
    Ok(view.filter_positions(|p| keep[p]))
}

pub(crate) fn indices_checksum(indices: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in indices {
        h.update((i as u64).to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Trains the primary model on `train_view`, then each complementary model on
/// the low-confidence part of its parent's subset, starting from the parent's
/// weights.
pub fn train_cascade(
    train_view: &SubsetView<'_>,
    val_view: &SubsetView<'_>,
    primary_spec: &ModelSpec,
    base: &TrainConfig,
    cfg: &CascadeConfig,
) -> Result<(CascadeEnsemble, Vec<StageRecord>)> {
    cfg.validate()?;
    let primary_cfg = cfg.stage_train_config(base, 0);
    log::info!("stage 0: training primary on {} samples", train_view.len());
    let (primary, report) = train(ModelInit::Fresh(primary_spec.clone()), train_view, val_view, &primary_cfg)?;
    extend_cascade(primary, report, train_view, val_view, base, cfg)
}

/// Builds stages `1..=m` on top of an already trained primary.
pub(crate) fn extend_cascade(
    primary: TrainedModel,
    primary_report: TrainReport,
    train_view: &SubsetView<'_>,
    val_view: &SubsetView<'_>,
    base: &TrainConfig,
    cfg: &CascadeConfig,
) -> Result<(CascadeEnsemble, Vec<StageRecord>)> {
    cfg.validate()?;
    let mut records = vec![StageRecord {
        stage: 0,
        threshold: None,
        subset_size: Some(train_view.len()),
        report: Some(primary_report),
        skipped: false,
        subset_checksum: Some(indices_checksum(train_view.indices())),
    }];
    let mut provenance = vec![StageProvenance {
        stage: 0,
        threshold: None,
        subset_size: train_view.len(),
        model_id: primary.metadata.id.clone(),
        parent_id: None,
    }];
    let mut models = vec![primary];
    let mut subset = train_view.clone();
    let mut skipping = false;

    for stage in 1..=cfg.num_complementary {
        let alpha = cfg.thresholds[stage - 1];
        if skipping {
            records.push(StageRecord {
                stage,
                threshold: Some(alpha),
                subset_size: None,
                report: None,
                skipped: true,
                subset_checksum: None,
            });
            continue;
        }
        let parent = models.last().expect("primary is present");
        subset = filter_low_confidence(parent, &subset, alpha)?;
        let checksum = indices_checksum(subset.indices());
        if subset.len() < cfg.min_subset_size {
            log::warn!(
                "stage {stage}: {} samples with cs <= {alpha} is below the minimum {}; skipping the rest of the cascade",
                subset.len(),
                cfg.min_subset_size
            );
            skipping = true;
            records.push(StageRecord {
                stage,
                threshold: Some(alpha),
                subset_size: Some(subset.len()),
                report: None,
                skipped: true,
                subset_checksum: Some(checksum),
            });
            continue;
        }
        log::info!("stage {stage}: training on {} samples with cs <= {alpha}", subset.len());
        let child = transfer_weights(parent, &parent.spec)?;
        let (model, report) =
            train(ModelInit::Transfer(child), &subset, val_view, &cfg.stage_train_config(base, stage))?;
        provenance.push(StageProvenance {
            stage,
            threshold: Some(alpha),
            subset_size: subset.len(),
            model_id: model.metadata.id.clone(),
            parent_id: model.metadata.parent_id.clone(),
        });
        records.push(StageRecord {
            stage,
            threshold: Some(alpha),
            subset_size: Some(subset.len()),
            report: Some(report),
            skipped: false,
            subset_checksum: Some(checksum),
        });
        models.push(model);
    }

    let raw = cfg.raw_weights();
    let mut built = raw[..models.len()].to_vec();
    if built.iter().all(|&b| b == 0.0) {
        log::warn!("configured weights of the built models are all zero; using uniform weights");
        built = vec![1.0; models.len()];
    }
    Ok((CascadeEnsemble::new(models, &built, provenance)?, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub thresholds: Vec<f64>,
    pub val_accuracy: f64,
    pub stages_built: usize,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best_index: usize,
    pub best_thresholds: Vec<f64>,
    /// One row per grid entry, in grid order.
    pub candidates: Vec<CandidateResult>,
    pub primary_report: TrainReport,
}

/// Trains the primary once, builds one cascade per threshold vector in `grid`
/// and picks the highest ensemble validation accuracy (first in grid order on
/// ties).
///
/// Each candidate is trained exactly as [`train_cascade`] would train it, so
/// its row can be reproduced by re-running the cascade with those thresholds.
/// Up to `threads` candidates run concurrently.
pub fn tune_thresholds(
    train_view: &SubsetView<'_>,
    val_view: &SubsetView<'_>,
    primary_spec: &ModelSpec,
    base: &TrainConfig,
    template: &CascadeConfig,
    grid: &[Vec<f64>],
    threads: usize,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return invalid("threshold grid is empty");
    }
    let configs: Vec<CascadeConfig> = grid
        .iter()
        .map(|alphas| CascadeConfig { num_complementary: alphas.len(), thresholds: alphas.clone(), ..template.clone() })
        .collect();
    for (i, c) in configs.iter().enumerate() {
        c.validate().map_err(|e| Error::Validation(format!("grid entry {i}: {e}")))?;
    }

    let primary_cfg = template.stage_train_config(base, 0);
    let (primary, primary_report) = train(ModelInit::Fresh(primary_spec.clone()), train_view, val_view, &primary_cfg)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CandidateResult>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    let workers = threads.clamp(1, configs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let outcome = extend_cascade(primary.clone(), primary_report.clone(), train_view, val_view, base, cfg)
                    .and_then(|(ens, _)| {
                        Ok(CandidateResult {
                            thresholds: cfg.thresholds.clone(),
                            val_accuracy: evaluate_ensemble(&ens, val_view)?.accuracy,
                            stages_built: ens.len(),
                        })
                    });
                results.lock().expect("no worker panicked")[i] = Some(outcome);
            });
        }
    });

    let candidates = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every candidate ran"))
        .collect::<Result<Vec<_>>>()?;
    if candidates.iter().all(|c| !c.thresholds.is_empty() && c.stages_built == 1) {
        return invalid("every candidate skipped all complementary stages");
    }
    let mut best_index = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.val_accuracy > candidates[best_index].val_accuracy {
            best_index = i;
        }
    }
    Ok(TuneOutcome {
        best_index,
        best_thresholds: candidates[best_index].thresholds.clone(),
        candidates,
        primary_report,
    })
}
