//! Imputation, anomaly detection, forecasting and classification on top of the encoder.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{svm_fit, svm_predict, SvmModel, SvmParams};
use crate::data::{downsample, fit_to_window, Series, SPLIT_SEED};
use crate::error::{bail, Result};
use crate::metrics::accuracy;
use crate::model::{left_pad, pool_rows, ForecastHead, MaskFill, MomentModel, PatchMaskPlan, Window};
use crate::numcore::{Tape, Tensor};
use crate::scalar::Scalar;

pub const IMPUTATION_RATIOS: [f64; 4] = [0.125, 0.25, 0.375, 0.5];
pub const SVM_C_GRID: [f64; 9] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputationSpec {
    pub ratio: f64,
    pub block_len: usize,
    pub seed: u64,
}

impl Default for ImputationSpec {
    fn default() -> Self {
        Self { ratio: 0.25, block_len: 8, seed: SPLIT_SEED }
    }
}

/// Hides `max(1, ⌊ratio·blocks⌋)` whole, fully observed blocks of `block_len`
/// steps on the grid starting at index 0. Returns the hidden timesteps.
pub fn imputation_mask(observed: &[bool], spec: &ImputationSpec) -> Result<Vec<bool>> {
    if !(spec.ratio > 0.0 && spec.ratio < 1.0) || spec.block_len == 0 {
        bail!(Config, "imputation ratio must lie in (0, 1) and blocks be non-empty, got {spec:?}");
    }
    let candidates: Vec<usize> = observed
        .chunks_exact(spec.block_len)
        .enumerate()
        .filter(|(_, c)| c.iter().all(|&o| o))
        .map(|(i, _)| i)
        .collect();
    let n_blocks = observed.len() / spec.block_len;
    let k = ((spec.ratio * n_blocks as f64).floor() as usize).max(1);
    if k > candidates.len() {
        bail!(Insufficient, "need {k} fully observed blocks to hide, found {}", candidates.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut hidden = vec![false; observed.len()];
    for pick in index::sample(&mut rng, candidates.len(), k) {
        let b = candidates[pick];
        hidden[b * spec.block_len..(b + 1) * spec.block_len].fill(true);
    }
    Ok(hidden)
}

/// Cuts a series into consecutive model windows from the start. A short final
/// piece is left-padded, or with `overlap` (and enough data) taken as the last
/// full window instead. Returns `(values, observed, first new index)` per window.
fn windows_of<S: Scalar>(values: &[S], observed: &[bool], t: usize, overlap: bool) -> Result<Vec<(Vec<S>, Vec<bool>, usize)>> {
    let n = values.len();
    let mut out = Vec::with_capacity(n.div_ceil(t));
    let mut start = 0;
    while start < n {
        let end = (start + t).min(n);
        if end - start < t && overlap && n >= t {
            out.push((values[n - t..].to_vec(), observed[n - t..].to_vec(), t - (end - start)));
        } else {
            let (v, o) = left_pad(&values[start..end], &observed[start..end], t)?;
            out.push((v, o, t - (end - start)));
        }
        start = end;
    }
    Ok(out)
}

/// Fills unobserved timesteps from the denormalized reconstruction; observed values pass through untouched.
pub fn zero_shot_impute<S: Scalar>(model: &MomentModel<S>, x: &Series<S>) -> Result<Series<S>> {
    let (t, p) = (model.config.seq_len, model.config.patch_len);
    if x.is_empty() {
        bail!(EmptySeries, "nothing to impute");
    }
    let chunks = windows_of(&x.values, &x.observed, t, true)?;
    for (i, (_, o, _)) in chunks.iter().enumerate() {
        let plan = PatchMaskPlan::from_timesteps(o, p)?;
        if plan.n_masked() == plan.len() {
            bail!(EmptySeries, "window {i} of {} has no fully observed patch", x.name());
        }
    }
    let plan = PatchMaskPlan::all_observed(model.config.n_patches());
    let mut filled = Vec::with_capacity(x.len());
    for group in chunks.chunks(16) {
        let batch: Vec<Window<'_, S>> = group.iter().map(|(v, o, _)| Window { values: v, observed: o, plan: &plan }).collect();
        let recon = model.reconstruct_windows(&batch, MaskFill::Token)?;
        for ((v, o, start), r) in group.iter().zip(recon) {
            filled.extend((*start..t).map(|i| if o[i] { v[i] } else { r[i] }));
        }
    }
    let mut out = x.clone();
    out.values = filled;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalySpec {
    pub window: usize,
    pub downsample_threshold: usize,
    pub downsample_factor: usize,
    /// Fraction of patches hidden per sweep round.
    pub mask_ratio: f64,
}

impl Default for AnomalySpec {
    fn default() -> Self {
        Self { window: 512, downsample_threshold: 2560, downsample_factor: 10, mask_ratio: 0.3 }
    }
}

/// Per-timestep scores for the (possibly downsampled) series that was scored.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyScores<S> {
    pub series: Series<S>,
    pub reconstruction: Vec<S>,
    pub scores: Vec<f64>,
}

/// Patch groups for a full-coverage masking sweep: `⌈1/r⌉` rounds, patch `i` hidden in round `i mod rounds`.
pub fn sweep_plans(n_patches: usize, ratio: f64) -> Result<Vec<PatchMaskPlan>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        bail!(Config, "sweep ratio must lie in (0, 1), got {ratio}");
    }
    let rounds = ((1.0 / ratio).ceil() as usize).clamp(2, n_patches.max(2));
    Ok((0..rounds).map(|g| PatchMaskPlan::new((0..n_patches).map(|i| i % rounds != g).collect())).collect())
}

/// Squared reconstruction error per timestep, each timestep reconstructed in the sweep round that hides its patch.
/// Unobserved timesteps score 0.
pub fn detect_anomalies<S: Scalar>(model: &MomentModel<S>, x: &Series<S>, spec: &AnomalySpec) -> Result<AnomalyScores<S>> {
    if spec.window != model.config.seq_len {
        bail!(Config, "anomaly window {} differs from the model window {}", spec.window, model.config.seq_len);
    }
    if x.is_empty() {
        bail!(EmptySeries, "nothing to score");
    }
    let series = downsample(x, spec.downsample_threshold, spec.downsample_factor);
    let (t, p) = (model.config.seq_len, model.config.patch_len);
    let plans = sweep_plans(model.config.n_patches(), spec.mask_ratio)?;
    let mut reconstruction = Vec::with_capacity(series.len());
    for (v, o, start) in windows_of(&series.values, &series.observed, t, false)? {
        if !o.iter().any(|&b| b) {
            reconstruction.extend_from_slice(&v[start..]);
            continue;
        }
        // a short final window may have all its data in one round's hidden
        // patches; that round is reconstructed unmasked instead
        let all = PatchMaskPlan::all_observed(plans[0].len());
        let round_plans: Vec<&PatchMaskPlan> = plans
            .iter()
            .map(|pl| if pl.timestep_mask(p).iter().zip(&o).any(|(&vis, &ob)| vis && ob) { pl } else { &all })
            .collect();
        let batch: Vec<Window<'_, S>> = round_plans.iter().map(|&plan| Window { values: &v, observed: &o, plan }).collect();
        let recon = model.reconstruct_windows(&batch, MaskFill::Token)?;
        for i in start..t {
            let round = plans.iter().position(|pl| !pl.is_observed(i / p)).expect("sweep covers every patch");
            reconstruction.push(recon[round][i]);
        }
    }
    let scores = series
        .values
        .iter()
        .zip(&reconstruction)
        .zip(&series.observed)
        .map(|((&a, &b), &o)| if o { (a.f64() - b.f64()).powi(2) } else { 0.0 })
        .collect();
    Ok(AnomalyScores { series, reconstruction, scores })
}

/// The most recent `len` steps of `x`, left-padded when shorter.
pub fn recent_window<S: Scalar>(x: &Series<S>, len: usize) -> Result<(Vec<S>, Vec<bool>)> {
    if x.is_empty() {
        bail!(EmptySeries, "empty history");
    }
    let start = x.len().saturating_sub(len);
    left_pad(&x.values[start..], &x.observed[start..], len)
}

/// Forecasts by masking `⌈H/P⌉` trailing patches after the most recent history
/// and reading back the first `H` reconstructed values. RevIN statistics come
/// from the history region only.
pub fn zero_shot_short_forecast<S: Scalar>(model: &MomentModel<S>, history: &Series<S>, horizon: usize) -> Result<Vec<S>> {
    let (t, p, n) = (model.config.seq_len, model.config.patch_len, model.config.n_patches());
    if horizon == 0 || horizon > t / 2 {
        bail!(Horizon, "zero-shot horizon must lie in 1..={}, got {horizon}", t / 2);
    }
    let plan = short_forecast_plan(n, p, horizon);
    let tail = plan.n_masked();
    let (mut values, mut observed) = recent_window(history, t - tail * p)?;
    values.resize(t, S::zero());
    observed.resize(t, false);
    let recon = model.reconstruct_windows(&[Window { values: &values, observed: &observed, plan: &plan }], MaskFill::Token)?;
    let start = t - tail * p;
    Ok(recon[0][start..start + horizon].to_vec())
}

/// The trailing `⌈H/P⌉` patches hidden, the rest visible.
pub fn short_forecast_plan(n_patches: usize, patch_len: usize, horizon: usize) -> PatchMaskPlan {
    let tail = horizon.div_ceil(patch_len).min(n_patches);
    PatchMaskPlan::new((0..n_patches).map(|i| i < n_patches - tail).collect())
}

/// Forecast from the attached head: normalize the recent history, encode, project, denormalize.
pub fn long_forecast<S: Scalar>(model: &MomentModel<S>, history: &Series<S>, horizon: usize) -> Result<Vec<S>> {
    Ok(long_forecast_batch(model, std::slice::from_ref(history), horizon)?.remove(0))
}

pub fn long_forecast_batch<S: Scalar>(model: &MomentModel<S>, histories: &[Series<S>], horizon: usize) -> Result<Vec<Vec<S>>> {
    match model.forecast_horizon() {
        None => bail!(Config, "forecasting head not attached"),
        Some(h) if h != horizon => bail!(Config, "head forecasts {h} steps, {horizon} requested"),
        Some(_) => {}
    }
    let (t, n) = (model.config.seq_len, model.config.n_patches());
    let plan = PatchMaskPlan::all_observed(n);
    let mut out = Vec::with_capacity(histories.len());
    for group in histories.chunks(32) {
        let windows = group.iter().map(|h| recent_window(h, t)).collect::<Result<Vec<_>>>()?;
        let batch: Vec<Window<'_, S>> = windows.iter().map(|(v, o)| Window { values: v, observed: o, plan: &plan }).collect();
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, |_| false);
        let enc = model.encode(&mut tape, &params, &batch, MaskFill::Token)?;
        let pred = model.forecast(&mut tape, &params, enc.hidden)?;
        for (row, st) in tape.value(pred).data().chunks(horizon).zip(&enc.stats) {
            out.push(st.denormalize(row));
        }
    }
    Ok(out)
}

/// Sequence representations for a batch of series, each first brought to the model window.
/// Only the series are visible here; labels never enter this stage.
pub fn representations<S: Scalar>(model: &MomentModel<S>, series: &[Series<S>]) -> Result<Vec<Vec<f64>>> {
    let (t, p, d) = (model.config.seq_len, model.config.patch_len, model.config.d_model);
    let plan = PatchMaskPlan::all_observed(model.config.n_patches());
    let windows = series.iter().map(|s| fit_to_window(s, t)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(series.len());
    for group in windows.chunks(32) {
        let batch: Vec<Window<'_, S>> = group.iter().map(|w| Window { values: &w.values, observed: &w.observed, plan: &plan }).collect();
        for (hidden, w) in model.embed_windows(&batch)?.into_iter().zip(group) {
            let include: Vec<bool> = w.observed.chunks(p).map(|c| c.iter().any(|&o| o)).collect();
            out.push(pool_rows(&hidden, d, &include)?.into_iter().map(|v| v.f64()).collect());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub c_grid: Vec<f64>,
    /// Share of each class's training examples held out to pick C.
    pub validation_fraction: f64,
    pub seed: u64,
    pub gamma: Option<f64>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self { c_grid: SVM_C_GRID.to_vec(), validation_fraction: 1.0 / 7.0, seed: SPLIT_SEED, gamma: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub svm: SvmModel,
    pub chosen_c: f64,
    pub validation_accuracy: f64,
}

/// Stratified hold-out: per class, `round(fraction·count)` examples (at most
/// `count − 1`) go to validation, chosen by a seeded shuffle.
fn stratified_holdout(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for c in classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let k = ((fraction * members.len() as f64).round() as usize).min(members.len() - 1);
        let held: Vec<usize> = index::sample(&mut rng, members.len(), k).into_iter().collect();
        for (j, &m) in members.iter().enumerate() {
            if held.contains(&j) {
                val.push(m)
            } else {
                fit.push(m)
            }
        }
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Picks C on a stratified validation split of the training set (ties favour
/// the smaller C), then refits on all training examples.
pub fn fit_classifier(features: &[Vec<f64>], labels: &[usize], cfg: &ClassifyConfig) -> Result<Classifier> {
    if features.len() != labels.len() {
        bail!(Dimension, "{} representations but {} labels", features.len(), labels.len());
    }
    if cfg.c_grid.is_empty() {
        bail!(Config, "empty C grid");
    }
    let (fit_idx, val_idx) = stratified_holdout(labels, cfg.validation_fraction, cfg.seed);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) { (idx.iter().map(|&i| features[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect()) };
    let (fx, fy) = pick(&fit_idx);
    let (vx, vy) = if val_idx.is_empty() { pick(&fit_idx) } else { pick(&val_idx) };
    let gamma = cfg.gamma.or_else(|| Some(crate::baselines::default_gamma(features)));
    let mut best: Option<(f64, f64)> = None;
    for &c in &cfg.c_grid {
        let svm = svm_fit(&fx, &fy, &SvmParams { c, gamma, ..SvmParams::default() })?;
        let acc = accuracy(&svm_predict(&svm, &vx), &vy)?;
        if best.is_none_or(|(a, _)| acc > a) {
            best = Some((acc, c));
        }
    }
    let (validation_accuracy, chosen_c) = best.expect("grid is non-empty");
    let svm = svm_fit(features, labels, &SvmParams { c: chosen_c, gamma, ..SvmParams::default() })?;
    Ok(Classifier { svm, chosen_c, validation_accuracy })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationRun {
    pub classifier: Classifier,
    pub predictions: Vec<usize>,
}

impl ClassificationRun {
    /// Test accuracy; errors if the test labels contain a class never seen in training.
    pub fn score(&self, test_labels: &[usize]) -> Result<f64> {
        if let Some(c) = test_labels.iter().find(|c| !self.classifier.svm.classes.contains(c)) {
            bail!(Stratification, "class {c} does not occur in the training split");
        }
        accuracy(&self.predictions, test_labels)
    }
}

/// Embeds train and test series, fits the SVM on training representations and
/// predicts the test set. Test labels are only consulted by [`ClassificationRun::score`].
pub fn classify_by_representation<S: Scalar>(
    model: &MomentModel<S>,
    train: &[Series<S>],
    train_labels: &[usize],
    test: &[Series<S>],
    cfg: &ClassifyConfig,
) -> Result<ClassificationRun> {
    let train_x = representations(model, train)?;
    let test_x = representations(model, test)?;
    let classifier = fit_classifier(&train_x, train_labels, cfg)?;
    let predictions = svm_predict(&classifier.svm, &test_x);
    Ok(ClassificationRun { classifier, predictions })
}

/// Attaches an all-zero forecasting head, which predicts the history mean.
pub fn zero_forecast_head<S: Scalar>(model: &mut MomentModel<S>, horizon: usize) {
    let features = model.config.n_patches() * model.config.d_model;
    model.weights.forecast = Some(ForecastHead {
        horizon,
        weight: Tensor::zeros(&[features, horizon]),
        bias: Tensor::zeros(&[horizon]),
    });
}
