//! One function per subcommand. Each validates its own options before
//! touching data and returns the report; provenance is filled in by the caller.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use moment_core::baselines::{
    interp_cubic, interp_linear, interp_nearest, knn_anomaly, naive_fill, naive_forecast, random_walk_drift, seasonal_naive,
    theta_forecast,
};
use moment_core::data::{downsample, load_classes, load_csv, load_labels, load_scores, split_by_series, split_horizontal, synth_corpus, SplitSpec, SynthKind};
use moment_core::metrics::{mae, mse, smape_m4, ScoredSeries};
use moment_core::model::{load_checkpoint, save_checkpoint, DEFAULT_MANIFEST};
use moment_core::numcore::CosineSchedule;
use moment_core::pretrain::{forecast_examples, linear_probe, pretrain, PretrainConfig, ProbeConfig, ProbeData, TrainLog};
use moment_core::probes::{
    default_grid, frequency_error_curve, frequency_grid, mask_embedding_stats, sinusoid_embedding_suite, zero_vs_mask_probe, MaskTokenStats,
    PROBE_MASK_RATIO,
};
use moment_core::report::EvalReport;
use moment_core::tasks::{
    classify_by_representation, detect_anomalies, imputation_mask, long_forecast_batch, zero_shot_impute, zero_shot_short_forecast, AnomalySpec,
    ClassifyConfig, ImputationSpec,
};
use moment_core::{Model, Real, TimeSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{usage, ModelChoice, RunConfig};

/// Window used by the statistical baselines when no model fixes one.
const BASELINE_HISTORY: usize = 512;
/// Neighbours for the k-NN anomaly baseline.
const KNN_K: usize = 5;
const IMPUTE_BLOCK: usize = 8;

pub fn dispatch(command: &str, cfg: &RunConfig, seed: u64) -> anyhow::Result<EvalReport> {
    match command {
        "pretrain" => run_pretrain(cfg, seed),
        "finetune" => run_finetune(cfg, seed),
        "forecast" => run_forecast(cfg),
        "impute" => run_impute(cfg, seed),
        "detect" => run_detect(cfg),
        "classify" => run_classify(cfg, seed),
        "probe" => run_probe(cfg, seed),
        "eval-metrics" => run_eval_metrics(cfg),
        other => Err(usage(format!("unknown command {other:?}"))),
    }
}

fn require<'a, T>(value: &'a Option<T>, key: &str) -> anyhow::Result<&'a T> {
    RunConfig::require(value, key)
}

fn choose<'a>(value: Option<&'a str>, default: &'a str, allowed: &[&str], key: &str) -> anyhow::Result<&'a str> {
    let v = value.unwrap_or(default);
    if allowed.contains(&v) {
        Ok(v)
    } else {
        Err(usage(format!("--{key} must be one of {}, got {v:?}", allowed.join(", "))))
    }
}

fn load_model(cfg: &RunConfig) -> anyhow::Result<Model> {
    let path = require(&cfg.ckpt, "ckpt")?;
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn is_side_file(name: &str) -> bool {
    [".labels.csv", ".classes.csv", ".scores.csv"].iter().any(|s| name.ends_with(s))
}

/// Series from a CSV file, or from every data CSV in a directory (names prefixed by file stem).
fn load_series(path: &Path) -> anyhow::Result<Vec<TimeSeries>> {
    let mut out = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(is_side_file))
            .collect();
        files.sort();
        for f in files {
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("series").to_string();
            for mut s in load_csv::<Real>(&f).with_context(|| format!("reading {}", f.display()))? {
                s.meta.name = format!("{stem}/{}", s.meta.name);
                out.push(s.trim_trailing_missing());
            }
        }
    } else {
        out = load_csv::<Real>(path)
            .with_context(|| format!("reading {}", path.display()))?
            .into_iter()
            .map(TimeSeries::trim_trailing_missing)
            .collect();
    }
    out.retain(|s| s.n_observed() > 0);
    if out.is_empty() {
        return Err(anyhow!("no observed data in {}", path.display()));
    }
    Ok(out)
}

fn par_map<T: Sync, R: Send>(workers: Option<usize>, items: &[T], f: impl Fn(usize, &T) -> anyhow::Result<R> + Sync) -> anyhow::Result<Vec<R>> {
    match workers {
        Some(k) if k > 1 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build()?;
            pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect())
        }
        _ => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
    }
}

/// Training partition under the fixed split seed: whole series when there are
/// at least three, otherwise the leading 60% of each.
fn training_partition(series: &[TimeSeries], report: &mut EvalReport) -> anyhow::Result<Vec<TimeSeries>> {
    if series.len() >= 3 {
        report.detail("split", "by_series");
        Ok(split_by_series(series, &SplitSpec::default())?.train)
    } else {
        report.detail("split", "horizontal");
        Ok(series.iter().map(|s| split_horizontal(s, &SplitSpec::default()).map(|p| p.train)).collect::<Result<_, _>>()?)
    }
}

fn write_log(log: &TrainLog, out: &Path, report: &mut EvalReport) -> anyhow::Result<()> {
    log.write_csv(&out.join("train_log.csv"))?;
    report.detail("data_digest", log.data_digest.clone());
    report.set("steps", log.steps.len() as f64);
    if let (Some(a), Some(b)) = (log.initial_loss(), log.final_loss()) {
        report.set("initial_loss", a);
        report.set("final_loss", b);
    }
    Ok(())
}

/// One CSV column per series; shorter columns are padded with empty cells.
fn write_columns(path: &Path, names: &[&str], columns: &[Vec<f64>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| c.get(i).map_or(String::new(), |v| v.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

fn run_pretrain(cfg: &RunConfig, seed: u64) -> anyhow::Result<EvalReport> {
    let model_cfg = cfg.model.clone().unwrap_or_else(|| ModelChoice::Named("tiny".into())).resolve()?;
    let data = require(&cfg.data, "data")?;
    let defaults = PretrainConfig::default();
    let pcfg = PretrainConfig {
        mask_ratio: cfg.mask_ratio.unwrap_or(defaults.mask_ratio),
        batch_size: cfg.batch_size.unwrap_or(defaults.batch_size),
        // a step budget alone bounds training; the epoch default applies otherwise
        epochs: cfg.epochs.or(if cfg.steps.is_some() { None } else { defaults.epochs }),
        seed,
        schedule: CosineSchedule {
            lr_init: cfg.lr.unwrap_or(defaults.schedule.lr_init),
            lr_final: cfg.lr_final.unwrap_or(defaults.schedule.lr_final),
            total_steps: cfg.steps.unwrap_or(defaults.schedule.total_steps),
        },
        ..defaults
    };
    pcfg.validate().map_err(|e| usage(e.to_string()))?;

    let mut report = EvalReport::new("pretrain", data.display().to_string());
    let series = load_series(data)?;
    let train = training_partition(&series, &mut report)?;
    let mut model = Model::init(model_cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let log = pretrain(&mut model, &train, &pcfg)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    save_checkpoint(&model, &out.join(DEFAULT_MANIFEST))?;
    write_log(&log, &out, &mut report)?;
    report.detail("checkpoint", DEFAULT_MANIFEST);
    report.detail("train_series", train.len().to_string());
    Ok(report)
}

fn run_finetune(cfg: &RunConfig, seed: u64) -> anyhow::Result<EvalReport> {
    let head = choose(cfg.head.as_deref(), "forecast", &["forecast", "reconstruction"], "head")?;
    if head == "forecast" {
        require(&cfg.horizon, "horizon")?;
    }
    let data = require(&cfg.data, "data")?;
    let mut model = load_model(cfg)?;
    let defaults = ProbeConfig::default();
    let pcfg = ProbeConfig {
        epochs: cfg.epochs.unwrap_or(defaults.epochs),
        batch_size: cfg.batch_size.unwrap_or(defaults.batch_size),
        lr_init: cfg.lr.unwrap_or(defaults.lr_init),
        lr_final: cfg.lr_final.unwrap_or(defaults.lr_final),
        seed,
        ..defaults
    };
    let mut report = EvalReport::new("finetune", data.display().to_string());
    report.detail("head", head);
    let series = load_series(data)?;
    let t = model.config.seq_len;

    let log = if head == "forecast" {
        let horizon = cfg.horizon.expect("checked above");
        let stride = cfg.stride.unwrap_or(horizon);
        if model.forecast_horizon() != Some(horizon) {
            model.attach_forecast_head(horizon, &mut ChaCha8Rng::seed_from_u64(seed))?;
        }
        let mut train = Vec::new();
        let mut val = Vec::new();
        for s in &series {
            let parts = split_horizontal(s, &SplitSpec::default())?;
            train.extend(forecast_examples(&parts.train, t, horizon, stride)?);
            let (a, b) = (parts.train.len(), parts.train.len() + parts.val.len());
            val.extend(region_cases(s, a, b, t, horizon));
        }
        if train.is_empty() {
            return Err(anyhow!("no training examples of horizon {horizon} in {}", data.display()));
        }
        let log = linear_probe(&mut model, ProbeData::Forecast { examples: &train }, &pcfg)?;
        if val.is_empty() {
            report.warn("validation region too short for one forecast; no validation metrics");
        } else {
            let histories: Vec<TimeSeries> = val.iter().map(|c| c.history.clone()).collect();
            let preds = long_forecast_batch(&model, &histories, horizon)?;
            let y: Vec<Real> = val.iter().flat_map(|c| c.target.iter().copied()).collect();
            let y_hat: Vec<Real> = preds.concat();
            report.set("mse", mse(&y, &y_hat)?);
            report.set("mae", mae(&y, &y_hat)?);
        }
        log
    } else {
        let train = training_partition(&series, &mut report)?;
        let mask_ratio = cfg.mask_ratio.unwrap_or(PROBE_MASK_RATIO);
        linear_probe(&mut model, ProbeData::Reconstruction { windows: &train, mask_ratio }, &pcfg)?
    };
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    save_checkpoint(&model, &out.join(DEFAULT_MANIFEST))?;
    write_log(&log, &out, &mut report)?;
    report.detail("checkpoint", DEFAULT_MANIFEST);
    Ok(report)
}

/// A history of at most `window` steps with the fully observed values after it.
struct Case {
    history: TimeSeries,
    target: Vec<Real>,
}

/// Non-overlapping forecast cases whose targets start inside `[from, to)` and end by `to`.
fn region_cases(s: &TimeSeries, from: usize, to: usize, window: usize, horizon: usize) -> Vec<Case> {
    let mut out = Vec::new();
    let mut end = from.max(1);
    while end + horizon <= to {
        if s.observed[end..end + horizon].iter().all(|&o| o) {
            let history = s.slice(end.saturating_sub(window)..end);
            if history.n_observed() > 0 {
                out.push(Case { history, target: s.values[end..end + horizon].to_vec() });
            }
        }
        end += horizon;
    }
    out
}

fn run_forecast(cfg: &RunConfig) -> anyhow::Result<EvalReport> {
    let horizon = *require(&cfg.horizon, "horizon")?;
    let method = choose(cfg.method.as_deref(), "moment", &["moment", "naive", "drift", "seasonal-naive", "theta"], "method")?;
    if method == "seasonal-naive" {
        require(&cfg.season, "season")?;
    }
    let data = require(&cfg.data, "data")?;
    let model = if method == "moment" { Some(load_model(cfg)?) } else { None };
    let window = model.as_ref().map_or(BASELINE_HISTORY, |m| m.config.seq_len);
    let mut report = EvalReport::new("forecast", data.display().to_string());
    report.detail("method", method);
    if let Some(m) = &model {
        let mode = if m.forecast_horizon() == Some(horizon) { "forecast_head" } else { "zero_shot" };
        report.detail("mode", mode);
    }
    let series = load_series(data)?;

    let predict = |history: &TimeSeries| -> anyhow::Result<Vec<Real>> {
        if let Some(m) = &model {
            return Ok(if m.forecast_horizon() == Some(horizon) {
                long_forecast_batch(m, std::slice::from_ref(history), horizon)?.remove(0)
            } else {
                zero_shot_short_forecast(m, history, horizon)?
            });
        }
        let h = naive_fill(&history.values, &history.observed)?;
        Ok(match method {
            "naive" => naive_forecast(&h, horizon)?,
            "drift" => random_walk_drift(&h, horizon)?,
            "seasonal-naive" => seasonal_naive(&h, horizon, cfg.season.expect("checked above"))?,
            _ => theta_forecast(&h, horizon, cfg.season.unwrap_or(1))?,
        })
    };
    let results = par_map(cfg.workers, &series, |_, s| {
        let parts = split_horizontal(s, &SplitSpec::default())?;
        let cases = region_cases(s, parts.train.len() + parts.val.len(), s.len(), window, horizon);
        let mut y = Vec::new();
        let mut y_hat = Vec::new();
        for c in &cases {
            y.extend_from_slice(&c.target);
            y_hat.extend(predict(&c.history)?);
        }
        Ok((y, y_hat))
    })?;
    let (mut y, mut y_hat) = (Vec::new(), Vec::new());
    for (s, (a, b)) in series.iter().zip(&results) {
        if a.is_empty() {
            report.warn(format!("series {} has no complete forecast window in its test region", s.name()));
            continue;
        }
        report.set_series(s.name(), "mse", mse(a, b)?);
        report.set_series(s.name(), "mae", mae(a, b)?);
        y.extend_from_slice(a);
        y_hat.extend_from_slice(b);
    }
    if y.is_empty() {
        return Err(anyhow!("no series has a complete {horizon}-step window in its test region"));
    }
    report.set("mse", mse(&y, &y_hat)?);
    report.set("mae", mae(&y, &y_hat)?);
    report.set_result("smape", smape_m4(&y, &y_hat));
    Ok(report)
}

fn run_impute(cfg: &RunConfig, seed: u64) -> anyhow::Result<EvalReport> {
    let method = choose(cfg.method.as_deref(), "moment", &["moment", "linear", "nearest", "cubic", "naive"], "method")?;
    let ratio = cfg.ratio.unwrap_or(ImputationSpec::default().ratio);
    let data = require(&cfg.data, "data")?;
    let model = if method == "moment" { Some(load_model(cfg)?) } else { None };
    let mut report = EvalReport::new("impute", data.display().to_string());
    report.detail("method", method);
    let series = load_series(data)?;

    // each series draws its blocks from its own seed so equal-length series differ
    let results = par_map(cfg.workers, &series, |i, s| {
        let spec = ImputationSpec { ratio, block_len: IMPUTE_BLOCK, seed: seed.wrapping_add(i as u64) };
        let hidden = imputation_mask(&s.observed, &spec).with_context(|| format!("series {}", s.name()))?;
        let visible: Vec<bool> = s.observed.iter().zip(&hidden).map(|(&o, &h)| o && !h).collect();
        let filled = match &model {
            Some(m) => zero_shot_impute(m, &TimeSeries::with_mask(s.name(), s.values.clone(), visible)?)?.values,
            None => match method {
                "linear" => interp_linear(&s.values, &visible)?,
                "nearest" => interp_nearest(&s.values, &visible)?,
                "cubic" => interp_cubic(&s.values, &visible)?,
                _ => naive_fill(&s.values, &visible)?,
            },
        };
        let pick = |v: &[Real]| -> Vec<Real> { v.iter().zip(&hidden).filter(|(_, &h)| h).map(|(&x, _)| x).collect() };
        Ok((pick(&s.values), pick(&filled), filled))
    })?;
    let (mut y, mut y_hat) = (Vec::new(), Vec::new());
    for (s, (a, b, _)) in series.iter().zip(&results) {
        report.set_series(s.name(), "mse", mse(a, b)?);
        report.set_series(s.name(), "mae", mae(a, b)?);
        y.extend_from_slice(a);
        y_hat.extend_from_slice(b);
    }
    report.set("mse", mse(&y, &y_hat)?);
    report.set("mae", mae(&y, &y_hat)?);

    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let names: Vec<&str> = series.iter().map(|s| s.name()).collect();
    let columns: Vec<Vec<f64>> = results.iter().map(|(_, _, f)| f.iter().map(|&v| f64::from(v)).collect()).collect();
    write_columns(&out.join("imputed.csv"), &names, &columns)?;
    Ok(report)
}

fn run_detect(cfg: &RunConfig) -> anyhow::Result<EvalReport> {
    let method = choose(cfg.method.as_deref(), "moment", &["moment", "knn"], "method")?;
    let data = require(&cfg.data, "data")?;
    let model = if method == "moment" { Some(load_model(cfg)?) } else { None };
    let spec = AnomalySpec { window: cfg.window.unwrap_or(AnomalySpec::default().window), ..AnomalySpec::default() };
    if let Some(m) = &model {
        if spec.window != m.config.seq_len {
            return Err(usage(format!("--window {} must equal the checkpoint window {}", spec.window, m.config.seq_len)));
        }
    }
    let knn_window = cfg.knn_window.unwrap_or(16);
    let mut report = EvalReport::new("detect", data.display().to_string());
    report.detail("method", method);
    let labels = cfg.labels.as_deref().map(load_labels).transpose()?;
    let mut series = load_series(data)?;
    if let Some(l) = &labels {
        series = series.into_iter().map(|s| s.with_anomaly_labels(l.clone())).collect::<Result<_, _>>().context("labels do not fit the series")?;
    }

    let scored = par_map(cfg.workers, &series, |_, s| {
        Ok(match &model {
            Some(m) => {
                let r = detect_anomalies(m, s, &spec)?;
                (r.scores, r.series.meta.anomaly_labels)
            }
            None => {
                let d = downsample(s, spec.downsample_threshold, spec.downsample_factor);
                (knn_anomaly(&naive_fill(&d.values, &d.observed)?, knn_window, KNN_K)?, d.meta.anomaly_labels)
            }
        })
    })?;

    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let names: Vec<&str> = series.iter().map(|s| s.name()).collect();
    let columns: Vec<Vec<f64>> = scored.iter().map(|(s, _)| s.clone()).collect();
    write_columns(&out.join("scores.csv"), &names, &columns)?;

    if labels.is_none() {
        report.warn("no labels given; scores written without metrics");
        return Ok(report);
    }
    let graded: Vec<(String, ScoredSeries)> = series
        .iter()
        .zip(scored)
        .map(|(s, (scores, l))| Ok((s.name().to_string(), ScoredSeries::new(scores, l.expect("labels attached"))?)))
        .collect::<anyhow::Result<_>>()?;
    if let [(_, only)] = graded.as_slice() {
        report.add_anomaly_metrics(only);
    } else {
        // several columns: per-series metrics, averaged
        let mut each = Vec::new();
        for (name, g) in &graded {
            let mut r = EvalReport::default();
            r.add_anomaly_metrics(g);
            for key in ["adj_best_f1", "vus_roc"] {
                if let Some(v) = r.metric(key) {
                    report.set_series(name, key, v);
                }
            }
            report.warnings.extend(r.warnings.iter().map(|w| format!("{name}: {w}")));
            each.push(r);
        }
        for key in ["adj_best_f1", "vus_roc"] {
            let vals: Vec<f64> = each.iter().filter_map(|r| r.metric(key)).collect();
            if vals.is_empty() {
                report.set_result(key, Err(moment_core::Error::UndefinedMetric(format!("{key} is undefined for every series"))));
            } else {
                report.set(key, vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
    }
    Ok(report)
}

fn class_labels(series: &[TimeSeries], path: &Path) -> anyhow::Result<Vec<usize>> {
    let table = load_classes(path)?;
    series
        .iter()
        .map(|s| {
            table
                .iter()
                .find(|(n, _)| n == s.name())
                .map(|&(_, c)| c)
                .ok_or_else(|| anyhow!("series {} has no class in {}", s.name(), path.display()))
        })
        .collect()
}

fn run_classify(cfg: &RunConfig, seed: u64) -> anyhow::Result<EvalReport> {
    let (data, classes) = (require(&cfg.data, "data")?, require(&cfg.classes, "classes")?);
    let (test, test_classes) = (require(&cfg.test, "test")?, require(&cfg.test_classes, "test_classes")?);
    let model = load_model(cfg)?;
    let mut report = EvalReport::new("classify", data.display().to_string());
    let train = load_series(data)?;
    let test_series = load_series(test)?;
    let train_labels = class_labels(&train, classes)?;
    let test_labels = class_labels(&test_series, test_classes)?;
    let run = classify_by_representation(&model, &train, &train_labels, &test_series, &ClassifyConfig { seed, ..ClassifyConfig::default() })?;
    report.set("accuracy", run.score(&test_labels)?);
    report.set("validation_accuracy", run.classifier.validation_accuracy);
    report.detail("chosen_c", run.classifier.chosen_c.to_string());

    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
    w.write_record(["series_name", "predicted", "class"])?;
    for ((s, p), c) in test_series.iter().zip(&run.predictions).zip(&test_labels) {
        w.write_record([s.name().to_string(), p.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(report)
}

fn synth_kind(name: &str) -> anyhow::Result<SynthKind> {
    SynthKind::ALL
        .into_iter()
        .find(|k| k.as_str() == name)
        .ok_or_else(|| usage(format!("--synth must be one of {}, got {name:?}", SynthKind::ALL.map(SynthKind::as_str).join(", "))))
}

fn run_probe(cfg: &RunConfig, seed: u64) -> anyhow::Result<EvalReport> {
    let kind = choose(Some(require(&cfg.kind, "kind")?.as_str()), "", &["embedding", "frequency-error", "mask-token", "zero-vs-mask"], "kind")?;
    let synth = synth_kind(cfg.synth.as_deref().unwrap_or("frequency"))?;
    let model = load_model(cfg)?;
    let out = cfg.out_dir();
    let dataset = match (kind, &cfg.data) {
        ("embedding", _) => format!("synthetic:{}", synth.as_str()),
        ("zero-vs-mask", Some(p)) => p.display().to_string(),
        ("zero-vs-mask", None) => "synthetic:corpus".to_string(),
        ("frequency-error", _) => "synthetic:frequency".to_string(),
        _ => "checkpoint".to_string(),
    };
    let mut report = EvalReport::new(format!("probe:{kind}"), dataset);
    let artifacts = match kind {
        "embedding" => {
            let suite = sinusoid_embedding_suite(&model, synth, &default_grid(synth), cfg.noise.unwrap_or(0.1), seed)?;
            report.set("explained_pc1", suite.explained[0]);
            report.set("explained_pc2", suite.explained[1]);
            suite.write(&out)?
        }
        "frequency-error" => {
            let curve = frequency_error_curve(&model, &frequency_grid(), cfg.noise.unwrap_or(0.0), seed)?;
            report.set("spearman", curve.spearman);
            curve.write(&out)?
        }
        "mask-token" => {
            let stats = mask_embedding_stats(&model);
            report.set("mean", stats.mean);
            report.set("std", stats.std);
            report.set("ks", stats.ks);
            report.set("dim", stats.dim as f64);
            MaskTokenStats::write_values(&model, &out)?
        }
        _ => {
            let sample = match &cfg.data {
                Some(p) => load_series(p)?,
                None => synth_corpus::<Real>(64, model.config.seq_len, seed)?,
            };
            let pairs = zero_vs_mask_probe(&model, &sample, cfg.mask_ratio.unwrap_or(PROBE_MASK_RATIO), seed)?;
            report.set("mask_token_mse", pairs.mean_token());
            report.set("zero_fill_mse", pairs.mean_zeros());
            pairs.write(&out)?
        }
    };
    let names: Vec<String> = artifacts.iter().filter_map(|p| p.file_name()?.to_str().map(str::to_string)).collect();
    report.detail("artifacts", names.join(","));
    Ok(report)
}

fn run_eval_metrics(cfg: &RunConfig) -> anyhow::Result<EvalReport> {
    let (scores_path, labels_path) = (require(&cfg.scores, "scores")?, require(&cfg.labels, "labels")?);
    let scores = load_scores(scores_path).with_context(|| format!("reading {}", scores_path.display()))?;
    let labels = load_labels(labels_path).with_context(|| format!("reading {}", labels_path.display()))?;
    if scores.len() != labels.len() {
        return Err(anyhow!("{} scores but {} labels", scores.len(), labels.len()));
    }
    let mut report = EvalReport::new("eval-metrics", scores_path.display().to_string());
    report.add_anomaly_metrics(&ScoredSeries::new(scores, labels)?);
    Ok(report)
}
