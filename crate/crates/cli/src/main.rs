//! `moment-mini`: batch entry points for pre-training, task adapters, metrics and probes.
//!
//! Every command writes `report.json` and the effective `config.json` to its
//! output directory. Exit status is 0 on success, 1 when the computation
//! fails, and 2 for usage errors (bad flags, bad config, missing inputs).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use moment_core::report::{config_hash, EvalReport};

use config::{ModelChoice, RunConfig};

pub const VERSION: &str = env!("MOMENT_MINI_VERSION");

/// Raised for problems the caller can fix by changing the invocation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "moment-mini", version = VERSION, about = "Desk-scale masked time-series encoder: train, adapt, evaluate, probe")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: current directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (falls back to the config, then MOMENT_MINI_SEED, then 13)
    #[arg(long)]
    seed: Option<u64>,
    /// Threads used across independent series
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Masked-reconstruction pre-training on a CSV file or directory
    Pretrain(PretrainArgs),
    /// Linear probing of a forecasting or reconstruction head
    Finetune(FinetuneArgs),
    /// Forecast the test region of each series and score it
    Forecast(ForecastArgs),
    /// Hide blocks of each series, fill them back and score the fill
    Impute(ImputeArgs),
    /// Per-timestep anomaly scores, graded against labels when given
    Detect(DetectArgs),
    /// SVM on sequence representations
    Classify(ClassifyArgs),
    /// Interpretability probes
    Probe(ProbeArgs),
    /// Grade an external anomaly score file against labels
    EvalMetrics(EvalMetricsArgs),
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    common: Common,
    /// tiny, small, base, or a model config JSON file
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_final: Option<f64>,
    #[arg(long)]
    mask_ratio: Option<f64>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// forecast (default) or reconstruction
    #[arg(long)]
    head: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_final: Option<f64>,
    #[arg(long)]
    mask_ratio: Option<f64>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    /// moment (default), naive, drift, seasonal-naive or theta
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    season: Option<usize>,
}

#[derive(Args)]
struct ImputeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Share of length-8 blocks hidden
    #[arg(long)]
    ratio: Option<f64>,
    /// moment (default), linear, nearest, cubic or naive
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// moment (default) or knn
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    knn_window: Option<usize>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Training collection, one series per column
    #[arg(long)]
    data: Option<PathBuf>,
    /// series_name,class rows for the training collection
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    test_classes: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// embedding, frequency-error, mask-token or zero-vs-mask
    #[arg(long)]
    kind: Option<String>,
    /// Factor varied by the embedding suite: frequency, amplitude, phase or trend
    #[arg(long)]
    synth: Option<String>,
    #[arg(long)]
    noise: Option<f64>,
    /// Sample for zero-vs-mask (default: a synthetic corpus)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    mask_ratio: Option<f64>,
}

#[derive(Args)]
struct EvalMetricsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

macro_rules! flags {
    ($args:expr; $($field:ident),*) => {
        RunConfig {
            out: $args.common.out.clone(),
            seed: $args.common.seed,
            workers: $args.common.workers,
            $($field: $args.$field.clone(),)*
            ..RunConfig::default()
        }
    };
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Pretrain(_) => "pretrain",
            Self::Finetune(_) => "finetune",
            Self::Forecast(_) => "forecast",
            Self::Impute(_) => "impute",
            Self::Detect(_) => "detect",
            Self::Classify(_) => "classify",
            Self::Probe(_) => "probe",
            Self::EvalMetrics(_) => "eval-metrics",
        }
    }

    fn config_file(&self) -> Option<&PathBuf> {
        match self {
            Self::Pretrain(a) => a.common.config.as_ref(),
            Self::Finetune(a) => a.common.config.as_ref(),
            Self::Forecast(a) => a.common.config.as_ref(),
            Self::Impute(a) => a.common.config.as_ref(),
            Self::Detect(a) => a.common.config.as_ref(),
            Self::Classify(a) => a.common.config.as_ref(),
            Self::Probe(a) => a.common.config.as_ref(),
            Self::EvalMetrics(a) => a.common.config.as_ref(),
        }
    }

    fn flags(&self) -> RunConfig {
        match self {
            Self::Pretrain(a) => RunConfig {
                model: a.model.clone().map(ModelChoice::Named),
                ..flags!(a; data, steps, epochs, batch_size, lr, lr_final, mask_ratio)
            },
            Self::Finetune(a) => flags!(a; ckpt, data, head, horizon, stride, epochs, batch_size, lr, lr_final, mask_ratio),
            Self::Forecast(a) => flags!(a; ckpt, data, horizon, method, season),
            Self::Impute(a) => flags!(a; ckpt, data, ratio, method),
            Self::Detect(a) => flags!(a; ckpt, data, labels, method, window, knn_window),
            Self::Classify(a) => flags!(a; ckpt, data, classes, test, test_classes),
            Self::Probe(a) => flags!(a; ckpt, kind, synth, noise, data, mask_ratio),
            Self::EvalMetrics(a) => flags!(a; scores, labels),
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let name = cli.command.name();
    let base = match cli.command.config_file() {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut cfg = cli.command.flags().over(base);
    if let Some(c) = cfg.command.as_deref().filter(|&c| c != name) {
        return Err(config::usage(format!("config is for command {c:?}, not {name:?}")));
    }
    cfg.command = Some(name.to_string());
    cfg.validate()?;
    let seed = cfg.resolve_seed()?;

    let out = cfg.out_dir();
    let mut report: EvalReport = commands::dispatch(name, &cfg, seed)?;
    let canonical = cfg.canonical()?;
    report.config_hash = config_hash(&canonical)?;
    report.seed = seed;
    report.version = VERSION.to_string();
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&canonical)? + "\n")?;
    report.write(&out.join("report.json"))?;
    print!("{}", report.to_json()?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<UsageError>().is_some() { 2 } else { 1 })
        }
    }
}
