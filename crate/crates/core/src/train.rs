//! Minibatch training, optimizers and evaluation metrics.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::SubsetView;
use crate::error::{invalid, Error, Result};
use crate::nn::{backward, forward, predict_proba, Mode, ModelSpec, ParamSet, TrainedModel};
use crate::rng::{stream, Rng};
use crate::tensor::{argmax, Tensor};

/// Samples per inference chunk when scoring a whole view.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam { lr, beta1: default_beta1(), beta2: default_beta2(), epsilon: default_epsilon() }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr, .. } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return invalid(format!("learning rate must be positive, got {lr}"));
        }
        match *self {
            Optimizer::Sgd { momentum, .. } if !(0.0..1.0).contains(&momentum) => {
                invalid(format!("momentum {momentum} outside [0, 1)"))
            }
            Optimizer::Adam { beta1, beta2, epsilon, .. }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 =>
            {
                invalid("adam needs beta1, beta2 in [0, 1) and epsilon > 0")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Multiplies the learning rate when training starts from a transferred model.
    pub lr_scale_for_transfer: f64,
    /// Per-epoch learning-rate factor: epoch `e` runs at `lr · lr_decay^e`.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::adam(1e-3),
            batch_size: 128,
            epochs: 12,
            seed: 0,
            shuffle: true,
            lr_scale_for_transfer: 0.1,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return invalid("batch_size must be ≥ 1");
        }
        if self.epochs == 0 {
            return invalid("epochs must be ≥ 1");
        }
        if !(self.lr_scale_for_transfer.is_finite() && self.lr_scale_for_transfer > 0.0) {
            return invalid("lr_scale_for_transfer must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return invalid(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        Ok(())
    }

    /// Learning rate of zero-based `epoch` for a run starting at `lr`.
    pub fn epoch_lr(&self, lr: f64, epoch: usize) -> f64 {
        lr * self.lr_decay.powi(epoch as i32)
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    optimizer: Optimizer,
    lr: f64,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    /// `lr` overrides the optimizer's own rate (e.g. after transfer scaling).
    pub fn new(optimizer: Optimizer, lr: f64) -> Self {
        OptimizerState { optimizer, lr, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        self.step += 1;
        let lr = self.lr;
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Consistency(format!("gradient for unknown parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Consistency(format!("gradient shape mismatch for {name}")));
            }
            let n = g.len();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            match self.optimizer {
                Optimizer::Sgd { momentum, .. } => {
                    // v <- momentum * v - lr * g;  p <- p + v
                    for ((p, v), g) in p.data_mut().iter_mut().zip(m.iter_mut()).zip(g.data()) {
                        *v = momentum * *v - lr * g;
                        *p += *v;
                    }
                }
                Optimizer::Adam { beta1, beta2, epsilon, .. } => {
                    let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
                    let c1 = 1.0 - beta1.powi(self.step as i32);
                    let c2 = 1.0 - beta2.powi(self.step as i32);
                    for (((p, m), v), g) in p.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mean of `-ln p[label]` over the batch, with probabilities clamped to `1e-12`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let [b, n] = probs.shape()[..] else {
        return Err(Error::Dimension(format!("probs must be b×n, got {:?}", probs.shape())));
    };
    if labels.len() != b {
        return Err(Error::Dimension(format!("{} labels for {b} rows", labels.len())));
    }
    if b == 0 {
        return invalid("cross entropy of an empty batch");
    }
    let mut total = 0.0;
    for (row, &label) in probs.rows().zip(labels) {
        if label >= n {
            return invalid(format!("label {label} out of range [0, {n})"));
        }
        total -= row[label].max(1e-12).ln();
    }
    Ok(total / b as f64)
}

/// How training starts: from fresh He-initialized weights or from a model
/// whose weights were transferred.
#[derive(Debug, Clone)]
pub enum ModelInit {
    Fresh(ModelSpec),
    Transfer(TrainedModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub steps: usize,
    /// Learning rate of the first epoch.
    pub learning_rate: f64,
    pub wall_clock_seconds: f64,
    pub checksum: String,
    /// Validation probabilities of the kept epoch; not serialized.
    #[serde(skip)]
    pub best_val_proba: Option<Tensor>,
}

impl TrainReport {
    /// Equality ignoring wall-clock time and cached probabilities.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        TrainReport { wall_clock_seconds: 0.0, best_val_proba: None, ..self.clone() }
            == TrainReport { wall_clock_seconds: 0.0, best_val_proba: None, ..other.clone() }
    }
}

fn check_compatible(model: &TrainedModel, view: &SubsetView<'_>, what: &str) -> Result<()> {
    if view.is_empty() {
        return invalid(format!("{what} view is empty"));
    }
    let ds = view.base();
    if ds.sample_shape() != model.spec.input_shape {
        return Err(Error::Dimension(format!(
            "{what} samples are {:?} but the model expects {:?}",
            ds.sample_shape(),
            model.spec.input_shape
        )));
    }
    if ds.num_classes() > model.spec.num_classes {
        return invalid(format!("{what} data has {} classes, model only {}", ds.num_classes(), model.spec.num_classes));
    }
    Ok(())
}

/// Trains for `cfg.epochs` epochs and keeps the parameters of the epoch with
/// the best validation accuracy (ties go to the later epoch).
///
/// The batch size is capped at the training view size.
pub fn train(
    init: ModelInit,
    train_view: &SubsetView<'_>,
    val_view: &SubsetView<'_>,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let (mut model, lr) = match init {
        ModelInit::Fresh(spec) => (TrainedModel::init(spec, cfg.seed)?, cfg.optimizer.lr()),
        ModelInit::Transfer(m) => (m, cfg.optimizer.lr() * cfg.lr_scale_for_transfer),
    };
    check_compatible(&model, train_view, "training")?;
    check_compatible(&model, val_view, "validation")?;

    let mut opt = OptimizerState::new(cfg.optimizer, lr);
    let mut shuffle_rng = Rng::with_stream(cfg.seed, stream::SHUFFLE);
    let mut dropout_rng = Rng::with_stream(cfg.seed, stream::DROPOUT);
    let n = train_view.len();
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();

    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        train_accuracy: Vec::with_capacity(cfg.epochs),
        val_accuracy: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        steps: 0,
        learning_rate: lr,
        wall_clock_seconds: 0.0,
        checksum: String::new(),
        best_val_proba: None,
    };
    let mut best: Option<(f64, ParamSet)> = None;

    for epoch in 0..cfg.epochs {
        opt.lr = cfg.epoch_lr(lr, epoch);
        if cfg.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(batch) {
            let (x, y) = train_view.gather(chunk);
            let (probs, cache) = forward(&model, &x, Mode::Train, &mut dropout_rng)?;
            loss_sum += cross_entropy(&probs, &y)? * y.len() as f64;
            correct += probs.rows().zip(&y).filter(|(row, &l)| argmax(row) == l).count();
            let grads = backward(&model, &cache, &probs, &y)?;
            drop(cache);
            opt.step(&mut model.params, &grads)?;
            report.steps += 1;
        }
        let val_proba = view_proba(&model, val_view)?;
        let val = evaluate_probs(&val_proba, &val_view.labels())?;
        report.train_loss.push(loss_sum / n as f64);
        report.train_accuracy.push(correct as f64 / n as f64);
        report.val_accuracy.push(val.accuracy);
        log::info!(
            "epoch {}/{}: loss {:.4} train acc {:.4} val acc {:.4}",
            epoch + 1,
            cfg.epochs,
            loss_sum / n as f64,
            correct as f64 / n as f64,
            val.accuracy
        );
        if best.as_ref().is_none_or(|(acc, _)| val.accuracy >= *acc) {
            best = Some((val.accuracy, model.params.clone()));
            report.best_epoch = epoch;
            report.best_val_proba = Some(val_proba);
        }
    }
    let (best_acc, params) = best.expect("at least one epoch");
    model.params = params;
    model.metadata.seed = cfg.seed;
    model.metadata.epochs = cfg.epochs;
    model.metadata.val_accuracy = Some(best_acc);
    model.metadata.id = model.checksum()[..16].to_string();
    report.checksum = model.checksum();
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Class probabilities for every sample of a view, in view order.
pub fn view_proba(model: &TrainedModel, view: &SubsetView<'_>) -> Result<Tensor> {
    check_compatible(model, view, "evaluation")?;
    let n = model.spec.num_classes;
    let mut out = Vec::with_capacity(view.len() * n);
    let positions: Vec<usize> = (0..view.len()).collect();
    for chunk in positions.chunks(EVAL_CHUNK) {
        let (x, _) = view.gather(chunk);
        out.extend_from_slice(predict_proba(model, &x)?.data());
    }
    Tensor::new(vec![view.len(), n], out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy, loss and confusion matrix of precomputed probabilities.
pub fn evaluate_probs(probs: &Tensor, labels: &[usize]) -> Result<Evaluation> {
    let n = probs.shape()[1];
    let mean_loss = cross_entropy(probs, labels)?;
    let mut confusion = vec![vec![0usize; n]; n];
    let mut correct = 0;
    for (row, &label) in probs.rows().zip(labels) {
        let pred = argmax(row);
        confusion[label][pred] += 1;
        if pred == label {
            correct += 1;
        }
    }
    Ok(Evaluation { accuracy: correct as f64 / labels.len() as f64, mean_loss, confusion })
}

pub fn evaluate(model: &TrainedModel, view: &SubsetView<'_>) -> Result<Evaluation> {
    evaluate_probs(&view_proba(model, view)?, &view.labels())
}
