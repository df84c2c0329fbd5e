//! The `run`, `tune`, `analyze` and `predict` pipelines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use complens::cascade::{
    combine_member_proba, ensemble_view_proba, load_bundle, save_bundle, train_cascade, tune_thresholds,
    CandidateResult, CascadeEnsemble, StageRecord,
};
use complens::confidence::{
    build_report, class_mean_attention, confidence_score, records_from_probs, to_pgm, ConfidenceReport,
};
use complens::data::{augment, load_idx, load_image_dir, split, LabeledDataset, SubsetView};
use complens::nn::TrainedModel;
use complens::tensor::{argmax, Tensor};
use complens::train::{evaluate_probs, view_proba, TrainReport};
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, AttentionConfig, DatasetSource, RunConfig};
use crate::error::{data, io, runtime, CliError};

pub const THREADS_ENV: &str = "COMPLENS_THREADS";

/// Worker cap from `COMPLENS_THREADS`, else the logical processor count.
pub fn thread_cap() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn load_dataset(source: DatasetSource<'_>) -> Result<LabeledDataset, CliError> {
    match source {
        DatasetSource::Idx { images, labels } => {
            load_idx(images, labels).map_err(data(format!("loading {}", images.display())))
        }
        DatasetSource::ImageDir { root, target } => {
            load_image_dir(root, target).map_err(data(format!("loading {}", root.display())))
        }
    }
}

/// Writes into a sibling staging directory and moves it to `out` only when
/// `body` succeeds; a failed run leaves no partial output behind.
///
/// An existing `out` is replaced only if it is empty or holds a previous run.
fn with_staging<T>(out: &Path, marker: &str, body: impl FnOnce(&Path) -> Result<T, CliError>) -> Result<T, CliError> {
    if out.exists() {
        let empty = fs::read_dir(out).map_err(io(out.display()))?.next().is_none();
        if !empty && !out.join(marker).exists() {
            return Err(CliError::Config(format!(
                "output directory {} exists and does not hold a previous run",
                out.display()
            )));
        }
    }
    let name = out.file_name().map_or("out".into(), |n| n.to_string_lossy().into_owned());
    let staging = out.with_file_name(format!(".{name}.staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io(staging.display()))?;
    }
    fs::create_dir_all(&staging).map_err(io(staging.display()))?;
    let result = body(&staging);
    match result {
        Ok(v) => {
            if out.exists() {
                fs::remove_dir_all(out).map_err(io(out.display()))?;
            }
            fs::rename(&staging, out).map_err(io(out.display()))?;
            Ok(v)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(io(path.display()))
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(path, text)
}

pub const SUMMARY_FILE: &str = "summary.csv";

/// One row of the individual-versus-ensemble comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: String,
    /// Test accuracy of the primary model, as a fraction.
    pub acc_individual: f64,
    /// Test accuracy of the ensemble, as a fraction.
    pub acc_ensemble: f64,
    pub stages_built: usize,
    pub thresholds: Vec<f64>,
}

/// CSV with accuracies in percent; all numbers carry four decimals and
/// thresholds are `;`-separated.
pub fn emit_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from("dataset,model,acc_individual,acc_ensemble,stages_built,thresholds\n");
    for r in rows {
        let thresholds: Vec<String> = r.thresholds.iter().map(|a| format!("{a:.4}")).collect();
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{},{}",
            r.dataset,
            r.model,
            100.0 * r.acc_individual,
            100.0 * r.acc_ensemble,
            r.stages_built,
            thresholds.join(";")
        );
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub accuracy_individual: f64,
    pub accuracy_ensemble: f64,
    pub confidence_individual: ConfidenceReport,
    pub confidence_ensemble: ConfidenceReport,
}

/// Everything `run` measured, at full precision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub summary: SummaryRow,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub validation: SplitMetrics,
    pub test: SplitMetrics,
    pub stages: Vec<StageRecord>,
    pub weights: Vec<f64>,
}

impl RunMetrics {
    pub fn primary_report(&self) -> Option<&TrainReport> {
        self.stages.first().and_then(|s| s.report.as_ref())
    }
}

fn split_metrics(
    ens: &CascadeEnsemble,
    view: &SubsetView<'_>,
    analysis: &AnalysisConfig,
    what: &str,
    cached: Option<Vec<Tensor>>,
) -> Result<SplitMetrics, CliError> {
    let member = match cached {
        Some(member) => member,
        None => ens
            .models()
            .iter()
            .map(|m| view_proba(m, view))
            .collect::<complens::Result<Vec<_>>>()
            .map_err(runtime(what))?,
    };
    let ens_probs = combine_member_proba(ens, &member).map_err(runtime(what))?;
    let primary_probs = &member[0];
    let labels = view.labels();
    let report = |probs| -> Result<ConfidenceReport, CliError> {
        let records = records_from_probs(probs, view).map_err(runtime(what))?;
        build_report(&records, analysis.bins, analysis.low_threshold).map_err(runtime(what))
    };
    let confidence_individual = report(primary_probs)?;
    let confidence_ensemble = report(&ens_probs)?;
    Ok(SplitMetrics {
        accuracy_individual: evaluate_probs(primary_probs, &labels).map_err(runtime(what))?.accuracy,
        accuracy_ensemble: evaluate_probs(&ens_probs, &labels).map_err(runtime(what))?.accuracy,
        confidence_individual,
        confidence_ensemble,
    })
}

fn write_attention(
    model: &TrainedModel,
    view: &SubsetView<'_>,
    att: &AttentionConfig,
    dir: &Path,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir.display()))?;
    let classes: Vec<usize> = if att.classes.is_empty() {
        let mut present: Vec<usize> = view.labels();
        present.sort_unstable();
        present.dedup();
        present
    } else {
        att.classes.clone()
    };
    for class in classes {
        let map = class_mean_attention(model, view, class, att.samples, att.patch, att.stride, att.seed)
            .map_err(runtime(format!("attention map for class {class}")))?;
        write(dir.join(format!("class_{class}.pgm")), to_pgm(&map))?;
    }
    Ok(())
}

/// Full experiment: load, split, train the cascade, evaluate and write every
/// report. `seed` replaces `train.seed`.
pub fn run(cfg: &RunConfig, out: Option<&Path>, seed: Option<u64>) -> Result<RunMetrics, CliError> {
    cfg.validate()?;
    let mut train_cfg = cfg.train.clone();
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    let out = out.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    let ds = load_dataset(cfg.dataset.source()?)?;
    let [ft, fv, fs] = cfg.split.fractions;
    let (train_view, val_view, test_view) = split(&ds, (ft, fv, fs), cfg.split.seed).map_err(data("splitting"))?;
    let train_view = match cfg.split.train_limit {
        Some(n) => train_view.truncated(n),
        None => train_view,
    };
    let augmented = match &cfg.augment {
        Some(ops) => Some(augment(&train_view, ops).map_err(data("augmenting"))?),
        None => None,
    };
    let train_view = augmented.as_ref().map_or(train_view, LabeledDataset::full_view);
    let spec = cfg.model.build(ds.sample_shape(), ds.num_classes())?;
    log::info!(
        "{}: {} train / {} validation / {} test samples, {} classes",
        cfg.name,
        train_view.len(),
        val_view.len(),
        test_view.len(),
        ds.num_classes()
    );

    with_staging(&out, SUMMARY_FILE, |dir| {
        let (ens, stages) =
            train_cascade(&train_view, &val_view, &spec, &train_cfg, &cfg.cascade).map_err(runtime("training"))?;
        // Training already evaluated each kept model on the validation view.
        let cached: Option<Vec<Tensor>> =
            stages.iter().filter_map(|s| s.report.as_ref()).map(|r| r.best_val_proba.clone()).collect();
        let cached = cached.filter(|c| c.len() == ens.len());
        let validation = split_metrics(&ens, &val_view, &cfg.analysis, "validation", cached)?;
        let test = split_metrics(&ens, &test_view, &cfg.analysis, "test", None)?;
        let summary = SummaryRow {
            dataset: cfg.name.clone(),
            model: cfg.model.label().to_string(),
            acc_individual: test.accuracy_individual,
            acc_ensemble: test.accuracy_ensemble,
            stages_built: ens.len(),
            thresholds: cfg.cascade.thresholds.clone(),
        };
        let metrics = RunMetrics {
            summary,
            train_size: train_view.len(),
            validation_size: val_view.len(),
            test_size: test_view.len(),
            validation,
            test,
            stages,
            weights: ens.weights().to_vec(),
        };

        save_bundle(dir.join("bundle"), &ens, &cfg.cascade, &metrics.stages).map_err(runtime("saving bundle"))?;
        write(dir.join(SUMMARY_FILE), emit_summary(std::slice::from_ref(&metrics.summary)))?;
        write(dir.join("confidence_hist.csv"), metrics.validation.confidence_individual.to_csv())?;
        write(dir.join("confidence_hist_ensemble.csv"), metrics.validation.confidence_ensemble.to_csv())?;
        let reports: Vec<_> = metrics.stages.iter().map(|s| (s.stage, s.report.clone())).collect();
        write_json(dir.join("train_reports.json"), &reports)?;
        write_json(dir.join("stages.json"), &metrics.stages)?;
        write_json(dir.join("metrics.json"), &metrics)?;
        let mut echoed = cfg.clone();
        echoed.train = train_cfg.clone();
        let toml = toml::to_string(&echoed).map_err(|e| CliError::Runtime(e.to_string()))?;
        write(dir.join("config.toml"), toml)?;
        if let Some(att) = &cfg.analysis.attention {
            write_attention(ens.primary(), &val_view, att, &dir.join("attention"))?;
        }
        Ok(metrics)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneSummary {
    pub best_index: usize,
    pub best_thresholds: Vec<f64>,
    pub candidates: Vec<CandidateResult>,
}

pub const TUNE_FILE: &str = "tune.csv";

/// Threshold search over `[tune].grid`; writes `tune.csv` and `tune.json`.
pub fn tune(cfg: &RunConfig, out: Option<&Path>, seed: Option<u64>) -> Result<TuneSummary, CliError> {
    cfg.validate()?;
    let grid = &cfg.tune.as_ref().ok_or_else(|| CliError::Config("tune: section is missing".into()))?.grid;
    let mut train_cfg = cfg.train.clone();
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    let threads = thread_cap()?;
    let out = out.map_or_else(|| cfg.output_dir.join("tune"), Path::to_path_buf);
    let ds = load_dataset(cfg.dataset.source()?)?;
    let [ft, fv, fs] = cfg.split.fractions;
    let (train_view, val_view, _) = split(&ds, (ft, fv, fs), cfg.split.seed).map_err(data("splitting"))?;
    let train_view = match cfg.split.train_limit {
        Some(n) => train_view.truncated(n),
        None => train_view,
    };
    let augmented = match &cfg.augment {
        Some(ops) => Some(augment(&train_view, ops).map_err(data("augmenting"))?),
        None => None,
    };
    let train_view = augmented.as_ref().map_or(train_view, LabeledDataset::full_view);
    let spec = cfg.model.build(ds.sample_shape(), ds.num_classes())?;

    with_staging(&out, TUNE_FILE, |dir| {
        let outcome = tune_thresholds(&train_view, &val_view, &spec, &train_cfg, &cfg.cascade, grid, threads)
            .map_err(runtime("tuning"))?;
        let mut csv = String::from("candidate,thresholds,val_accuracy,stages_built\n");
        for (i, c) in outcome.candidates.iter().enumerate() {
            let alphas: Vec<String> = c.thresholds.iter().map(|a| format!("{a:.4}")).collect();
            let _ = writeln!(csv, "{i},{},{:.4},{}", alphas.join(";"), 100.0 * c.val_accuracy, c.stages_built);
        }
        write(dir.join(TUNE_FILE), csv)?;
        let summary = TuneSummary {
            best_index: outcome.best_index,
            best_thresholds: outcome.best_thresholds,
            candidates: outcome.candidates,
        };
        write_json(dir.join("tune.json"), &summary)?;
        Ok(summary)
    })
}

/// Data passed on the command line to `analyze` and `predict`: an image
/// directory, or an IDX image file whose label file is given or inferred.
fn load_cli_data(path: &Path, labels: Option<&Path>, model: &TrainedModel) -> Result<LabeledDataset, CliError> {
    let [c, h, w] = model.spec.input_shape;
    let ds = if path.is_dir() {
        load_dataset(DatasetSource::ImageDir { root: path, target: (h, w) })?
    } else {
        let labels = match labels {
            Some(l) => l.to_path_buf(),
            None => infer_labels_path(path).ok_or_else(|| {
                CliError::Config(format!("cannot infer the label file for {}; pass --labels", path.display()))
            })?,
        };
        load_dataset(DatasetSource::Idx { images: path, labels: &labels })?
    };
    if ds.sample_shape() != [c, h, w] {
        return Err(CliError::Data(format!(
            "samples are {:?} but the bundle expects {:?}",
            ds.sample_shape(),
            model.spec.input_shape
        )));
    }
    if ds.num_classes() > model.num_classes() {
        return Err(CliError::Data(format!(
            "data has {} classes but the bundle predicts {}",
            ds.num_classes(),
            model.num_classes()
        )));
    }
    Ok(ds)
}

/// `train-images-idx3-ubyte` → `train-labels-idx1-ubyte`, `images.idx` →
/// `labels.idx`; only returns paths that exist.
pub fn infer_labels_path(images: &Path) -> Option<PathBuf> {
    let name = images.file_name()?.to_str()?;
    if !name.contains("images") {
        return None;
    }
    let candidate = images.with_file_name(name.replace("images", "labels").replace("idx3", "idx1"));
    candidate.is_file().then_some(candidate)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub samples: usize,
    pub individual: ConfidenceReport,
    pub ensemble: ConfidenceReport,
}

pub const ANALYSIS_FILE: &str = "analysis.json";

/// Confidence histograms (and optionally attention maps) of a saved bundle on
/// labeled data.
pub fn analyze(
    bundle: &Path,
    data_path: &Path,
    labels: Option<&Path>,
    out: Option<&Path>,
    analysis: &AnalysisConfig,
) -> Result<AnalysisSummary, CliError> {
    let b = load_bundle(bundle).map_err(data(format!("loading bundle {}", bundle.display())))?;
    let ds = load_cli_data(data_path, labels, b.ensemble.primary())?;
    let view = ds.full_view();
    let out = out.map_or_else(|| bundle.join("analysis"), Path::to_path_buf);
    with_staging(&out, ANALYSIS_FILE, |dir| {
        let m = split_metrics(&b.ensemble, &view, analysis, "analysis", None)?;
        write(dir.join("confidence_hist.csv"), m.confidence_individual.to_csv())?;
        write(dir.join("confidence_hist_ensemble.csv"), m.confidence_ensemble.to_csv())?;
        let summary = AnalysisSummary {
            samples: view.len(),
            individual: m.confidence_individual,
            ensemble: m.confidence_ensemble,
        };
        write_json(dir.join(ANALYSIS_FILE), &summary)?;
        if let Some(att) = &analysis.attention {
            write_attention(b.ensemble.primary(), &view, att, &dir.join("attention"))?;
        }
        Ok(summary)
    })
}

/// Ensemble predictions as CSV: `index,label,predicted,confidence`.
pub fn predict(bundle: &Path, data_path: &Path, labels: Option<&Path>) -> Result<String, CliError> {
    let b = load_bundle(bundle).map_err(data(format!("loading bundle {}", bundle.display())))?;
    let ds = load_cli_data(data_path, labels, b.ensemble.primary())?;
    let view = ds.full_view();
    let probs = ensemble_view_proba(&b.ensemble, &view).map_err(runtime("predicting"))?;
    let mut csv = String::from("index,label,predicted,confidence\n");
    for (i, row) in probs.rows().enumerate() {
        let cs = confidence_score(row).map_err(runtime("predicting"))?;
        let _ = writeln!(csv, "{i},{},{},{cs:.4}", view.label(i), argmax(row));
    }
    Ok(csv)
}
