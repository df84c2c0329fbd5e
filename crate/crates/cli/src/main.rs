use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use complens_cli::config::{AnalysisConfig, AttentionConfig};
use complens_cli::pipeline::{analyze, predict, run, tune};
use complens_cli::{CliError, RunConfig};

// Training and inference allocate large activation buffers per batch.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Complementary ensembles trained by confidence-filtered cascades.
#[derive(Parser)]
#[command(name = "complens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    /// Cascade bundle directory written by `run`.
    #[arg(long)]
    bundle: PathBuf,
    /// Image directory or IDX image file.
    #[arg(long)]
    data: PathBuf,
    /// IDX label file; inferred from the image file name when omitted.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a cascade and write reports.
    Run(ExperimentArgs),
    /// Compare the threshold candidates of `[tune].grid`.
    Tune(ExperimentArgs),
    /// Confidence histograms and attention maps for a saved bundle.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = AnalysisConfig::default().low_threshold)]
        low_threshold: f64,
        #[arg(long, default_value_t = AnalysisConfig::default().bins)]
        bins: usize,
        /// Also write per-class occlusion attention maps.
        #[arg(long)]
        attention: bool,
        #[arg(long, default_value_t = AttentionConfig::default().patch)]
        patch: usize,
        #[arg(long, default_value_t = AttentionConfig::default().stride)]
        stride: usize,
        #[arg(long, default_value_t = AttentionConfig::default().samples)]
        samples: usize,
    },
    /// Write ensemble predictions as CSV.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let m = run(&cfg, a.out.as_deref(), a.seed)?;
            println!(
                "{}: individual {:.2}%, ensemble {:.2}%, {} model(s)",
                m.summary.dataset,
                100.0 * m.summary.acc_individual,
                100.0 * m.summary.acc_ensemble,
                m.summary.stages_built
            );
        }
        Command::Tune(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let t = tune(&cfg, a.out.as_deref(), a.seed)?;
            for (i, c) in t.candidates.iter().enumerate() {
                let mark = if i == t.best_index { "*" } else { " " };
                println!("{mark} {:?}: {:.2}% ({} models)", c.thresholds, 100.0 * c.val_accuracy, c.stages_built);
            }
        }
        Command::Analyze { data, out, low_threshold, bins, attention, patch, stride, samples } => {
            let analysis = AnalysisConfig {
                low_threshold,
                bins,
                attention: attention.then(|| AttentionConfig { patch, stride, samples, ..Default::default() }),
            };
            let s = analyze(&data.bundle, &data.data, data.labels.as_deref(), out.as_deref(), &analysis)?;
            println!(
                "{} samples: {:.2}% with cs >= {low_threshold} (individual), {:.2}% (ensemble)",
                s.samples,
                100.0 * s.individual.confident_fraction(),
                100.0 * s.ensemble.confident_fraction()
            );
        }
        Command::Predict { data, out } => {
            let csv = predict(&data.bundle, &data.data, data.labels.as_deref())?;
            match out {
                Some(path) => {
                    std::fs::write(&path, csv).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
                }
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
