//! Masked time-series modeling and linear probing.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{fit_to_window, Series};
use crate::error::{bail, Error, Result};
use crate::model::{BoundParams, MaskFill, MomentModel, PatchMaskPlan, RevinStats, Window};
use crate::numcore::{clip_global_norm, AdamWConfig, AdamWState, CosineSchedule, ParamUpdate, Tape, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub mask_ratio: f64,
    pub batch_size: usize,
    /// Passes over the data; `None` lets `schedule.total_steps` alone bound training.
    pub epochs: Option<usize>,
    pub seed: u64,
    /// Its `total_steps` is the step budget.
    pub schedule: CosineSchedule,
    pub clip_norm: f64,
    pub adamw: AdamWConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            mask_ratio: 0.3,
            batch_size: 64,
            epochs: Some(2),
            seed: 13,
            schedule: CosineSchedule::default(),
            clip_norm: 5.0,
            adamw: AdamWConfig::default(),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            bail!(Config, "mask_ratio must lie in (0, 1), got {}", self.mask_ratio);
        }
        if self.batch_size == 0 {
            bail!(Config, "batch_size must be positive");
        }
        if self.epochs == Some(0) {
            bail!(Config, "epochs must be positive");
        }
        if !(self.clip_norm > 0.0) {
            bail!(Config, "clip_norm must be positive, got {}", self.clip_norm);
        }
        self.schedule.validate()
    }

    /// Optimizer steps for a dataset of `n_windows`: the step budget or the epoch limit, whichever is smaller.
    pub fn total_steps(&self, n_windows: usize) -> usize {
        let budget = self.schedule.total_steps;
        match self.epochs {
            Some(e) => budget.min(e * n_windows.div_ceil(self.batch_size)),
            None => budget,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<TrainStep>,
    /// SHA-256 over the sorted names of every series the run consumed.
    pub data_digest: String,
}

impl TrainLog {
    pub fn push(&mut self, entry: TrainStep) -> Result<()> {
        if let Some(last) = self.steps.last() {
            if entry.step <= last.step {
                bail!(Contract, "train log steps must increase ({} after {})", entry.step, last.step);
            }
        }
        self.steps.push(entry);
        Ok(())
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.steps.first().map(|s| s.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }

    /// Mean loss over the last `k` logged steps.
    pub fn tail_mean(&self, k: usize) -> Option<f64> {
        let k = k.min(self.steps.len());
        (k > 0).then(|| self.steps[self.steps.len() - k..].iter().map(|s| s.loss).sum::<f64>() / k as f64)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.steps {
            w.serialize(s).map_err(|e| Error::Contract(e.to_string()))?;
        }
        if self.steps.is_empty() {
            w.write_record(["step", "lr", "loss"]).map_err(|e| Error::Contract(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// Digest of the sorted, de-duplicated series names.
pub fn names_digest<'a>(names: impl IntoIterator<Item = &'a str>) -> String {
    let mut names: Vec<&str> = names.into_iter().collect();
    names.sort_unstable();
    names.dedup();
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Masks exactly `max(1, ⌊ratio·n⌋)` of `n` patches, uniformly without replacement.
pub fn sample_patch_mask<R: Rng + ?Sized>(n_patches: usize, ratio: f64, rng: &mut R) -> Result<PatchMaskPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        bail!(Contract, "mask ratio must lie in (0, 1), got {ratio}");
    }
    if n_patches < 2 {
        bail!(Contract, "need at least 2 patches to mask, got {n_patches}");
    }
    let k = ((ratio * n_patches as f64).floor() as usize).max(1);
    let mut flags = vec![true; n_patches];
    for i in index::sample(rng, n_patches, k) {
        flags[i] = false;
    }
    Ok(PatchMaskPlan::new(flags))
}

/// 1 on timesteps that are observed and inside a masked patch, else 0.
pub fn loss_weights<S: Scalar>(plan: &PatchMaskPlan, observed: &[bool], patch_len: usize) -> Vec<S> {
    plan.timestep_mask(patch_len)
        .into_iter()
        .zip(observed)
        .map(|(visible, &o)| if !visible && o { S::one() } else { S::zero() })
        .collect()
}

/// Mean squared error over observed timesteps of masked patches, pooled across timesteps.
pub fn masked_mse_loss<S: Scalar>(x_norm: &[S], x_hat: &[S], plan: &PatchMaskPlan, observed: &[bool], patch_len: usize) -> Result<f64> {
    if x_norm.len() != x_hat.len() || x_norm.len() != observed.len() || plan.len() * patch_len != x_norm.len() {
        bail!(Dimension, "masked_mse_loss: {} targets, {} predictions, {} mask entries, {} patches of {patch_len}", x_norm.len(), x_hat.len(), observed.len(), plan.len());
    }
    let w: Vec<S> = loss_weights(plan, observed, patch_len);
    let count = w.iter().filter(|&&v| v > S::zero()).count();
    if count == 0 {
        bail!(Contract, "masked_mse_loss: no masked, observed timesteps");
    }
    let sse: f64 = x_norm
        .iter()
        .zip(x_hat)
        .zip(&w)
        .filter(|(_, &wi)| wi > S::zero())
        .map(|((&a, &b), _)| (a.f64() - b.f64()).powi(2))
        .sum();
    Ok(sse / count as f64)
}

/// Builds the masked-reconstruction loss for a batch of windows on `tape`.
pub fn reconstruction_loss<S: Scalar>(
    model: &MomentModel<S>,
    tape: &mut Tape<S>,
    params: &BoundParams,
    windows: &[&Series<S>],
    plans: &[PatchMaskPlan],
) -> Result<Var> {
    let batch: Vec<Window<'_, S>> = windows
        .iter()
        .zip(plans)
        .map(|(w, plan)| Window { values: &w.values, observed: &w.observed, plan })
        .collect();
    let enc = model.encode(tape, params, &batch, MaskFill::Token)?;
    let rec = model.reconstruct(tape, params, enc.hidden)?;
    let p = model.config.patch_len;
    let target: Vec<S> = enc.normalized.concat();
    let weights: Vec<S> = windows.iter().zip(plans).flat_map(|(w, plan)| loss_weights(plan, &w.observed, p)).collect();
    tape.weighted_mse(rec, &target, &weights)
}

/// Masked MSE of `model` on fixed windows and plans, evaluated in batches without gradients.
pub fn evaluate_masked_mse<S: Scalar>(model: &MomentModel<S>, windows: &[Series<S>], plans: &[PatchMaskPlan], batch_size: usize) -> Result<f64> {
    if windows.len() != plans.len() || windows.is_empty() {
        bail!(Dimension, "{} windows but {} plans", windows.len(), plans.len());
    }
    let (mut sse, mut count) = (0.0, 0.0);
    for (ws, ps) in windows.chunks(batch_size.max(1)).zip(plans.chunks(batch_size.max(1))) {
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, |_| false);
        let refs: Vec<&Series<S>> = ws.iter().collect();
        let n: f64 = ws.iter().zip(ps).map(|(w, p)| loss_weights::<f64>(p, &w.observed, model.config.patch_len).iter().sum::<f64>()).sum();
        if n == 0.0 {
            continue;
        }
        let loss = reconstruction_loss(model, &mut tape, &params, &refs, ps)?;
        sse += tape.value(loss).data()[0].f64() * n;
        count += n;
    }
    if count == 0.0 {
        bail!(Contract, "no masked, observed timesteps to evaluate");
    }
    Ok(sse / count)
}

/// Brings every series to the model window and checks it holds at least two fully observed patches.
pub fn prepare_windows<S: Scalar>(model: &MomentModel<S>, dataset: &[Series<S>]) -> Result<Vec<Series<S>>> {
    let (t, p) = (model.config.seq_len, model.config.patch_len);
    dataset
        .iter()
        .map(|s| {
            let w = fit_to_window(s, t)?;
            let full = PatchMaskPlan::from_timesteps(&w.observed, p)?;
            if full.len() - full.n_masked() < 2 {
                bail!(Contract, "series {} has fewer than 2 fully observed patches", s.name());
            }
            Ok(w)
        })
        .collect()
}

/// Seeded stream of mini-batches that reshuffles on every pass.
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl BatchStream {
    fn new(n: usize, batch_size: usize) -> Self {
        Self { order: (0..n).collect(), cursor: n, batch_size }
    }

    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let out = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }
}

fn lr_at(schedule: &CosineSchedule, step: usize, total: usize) -> Result<f64> {
    if total <= 1 {
        return Ok(schedule.lr_init);
    }
    CosineSchedule { total_steps: total - 1, ..*schedule }.lr(step)
}

/// Applies AdamW to the parameters selected by `trainable`, in [`crate::model::ModelWeights::named`] order.
fn apply_update<S: Scalar>(
    model: &mut MomentModel<S>,
    state: &mut AdamWState<S>,
    names: &[String],
    grads: &[Vec<S>],
    lr: f64,
) -> Result<()> {
    let mut slots: Vec<(String, &mut Tensor<S>)> = model.weights.named_mut().into_iter().filter(|(n, _)| names.contains(n)).collect();
    let mut updates: Vec<ParamUpdate<'_, S>> = slots
        .iter_mut()
        .zip(grads)
        .map(|((name, t), g)| ParamUpdate { name: name.as_str(), value: t.data_mut(), grad: g })
        .collect();
    state.step(&mut updates, lr)
}

/// Runs one optimizer step on `loss` for the bound parameters named in `trainable`.
fn optimize<S: Scalar>(
    model: &mut MomentModel<S>,
    state: &mut AdamWState<S>,
    tape: &Tape<S>,
    params: &BoundParams,
    trainable: &[String],
    loss: Var,
    clip_norm: f64,
    lr: f64,
) -> Result<()> {
    let grads = tape.backward(loss)?;
    let mut selected: Vec<Vec<S>> = params
        .vars
        .iter()
        .filter(|(n, _)| trainable.contains(n))
        .map(|&(_, v)| grads.get_or_zeros(v, tape.value(v).numel()))
        .collect();
    clip_global_norm(&mut selected, clip_norm)?;
    apply_update(model, state, trainable, &selected, lr)
}

fn loss_value<S: Scalar>(tape: &Tape<S>, loss: Var, step: usize) -> Result<f64> {
    let v = tape.value(loss).data()[0].f64();
    if !v.is_finite() {
        return Err(Error::Training { step, detail: format!("loss is {v}") });
    }
    Ok(v)
}

/// Draws masks for a batch, redrawing while no masked patch holds an observed timestep.
fn batch_plans<S: Scalar, R: Rng + ?Sized>(model: &MomentModel<S>, windows: &[&Series<S>], ratio: f64, rng: &mut R) -> Result<Vec<PatchMaskPlan>> {
    let (n, p) = (model.config.n_patches(), model.config.patch_len);
    for _ in 0..32 {
        let plans = windows.iter().map(|_| sample_patch_mask(n, ratio, rng)).collect::<Result<Vec<_>>>()?;
        let any = windows.iter().zip(&plans).any(|(w, plan)| loss_weights::<f64>(plan, &w.observed, p).iter().any(|&x| x > 0.0));
        if any {
            return Ok(plans);
        }
    }
    bail!(Contract, "masks keep landing on padding; windows are too short")
}

/// Masked-reconstruction pre-training of every parameter except the forecasting head.
///
/// Each logged loss is the batch loss measured before that step's update.
/// A non-finite loss stops training with the offending step; weights then
/// hold the last good update.
pub fn pretrain<S: Scalar>(model: &mut MomentModel<S>, dataset: &[Series<S>], cfg: &PretrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if dataset.is_empty() {
        bail!(EmptySeries, "pre-training dataset is empty");
    }
    let windows = prepare_windows(model, dataset)?;
    let total = cfg.total_steps(windows.len());
    let trainable: Vec<String> = model.weights.named().into_iter().map(|(n, _)| n).filter(|n| !n.starts_with("head.forecast")).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stream = BatchStream::new(windows.len(), cfg.batch_size);
    let mut state = AdamWState::new(cfg.adamw);
    let mut log = TrainLog { steps: Vec::with_capacity(total), data_digest: names_digest(dataset.iter().map(|s| s.name())) };

    for step in 0..total {
        let lr = lr_at(&cfg.schedule, step, total)?;
        let batch: Vec<&Series<S>> = stream.next(&mut rng).into_iter().map(|i| &windows[i]).collect();
        let plans = batch_plans(model, &batch, cfg.mask_ratio, &mut rng)?;
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, |n| trainable.iter().any(|t| t == n));
        let loss = reconstruction_loss(model, &mut tape, &params, &batch, &plans)?;
        let value = loss_value(&tape, loss, step)?;
        log.push(TrainStep { step, lr, loss: value })?;
        optimize(model, &mut state, &tape, &params, &trainable, loss, cfg.clip_norm, lr).map_err(|e| match e {
            Error::Training { detail, .. } => Error::Training { step, detail },
            other => other,
        })?;
    }
    Ok(log)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Reconstruction,
    Forecast,
}

/// A history window with the values that follow it.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastExample<S> {
    /// Exactly one model window long (left-padded if needed).
    pub history: Series<S>,
    pub target: Vec<S>,
}

/// Cuts `(history, next H values)` pairs from `series`, stepping back from the end by `stride`.
/// Histories shorter than `window` are left-padded; targets must be fully observed.
pub fn forecast_examples<S: Scalar>(series: &Series<S>, window: usize, horizon: usize, stride: usize) -> Result<Vec<ForecastExample<S>>> {
    if horizon == 0 || stride == 0 {
        bail!(Contract, "horizon and stride must be positive");
    }
    let mut out = Vec::new();
    let mut end = series.len().saturating_sub(horizon);
    while end >= 1 {
        let target_obs = &series.observed[end..end + horizon];
        if target_obs.iter().all(|&o| o) {
            let hist = series.slice(end.saturating_sub(window)..end);
            if hist.n_observed() > 0 {
                out.push(ForecastExample { history: fit_to_window(&hist, window)?, target: series.values[end..end + horizon].to_vec() });
            }
        }
        if end <= stride {
            break;
        }
        end -= stride;
    }
    out.reverse();
    Ok(out)
}

/// Data for a linear probe, matching the head being trained.
#[derive(Clone, Copy, Debug)]
pub enum ProbeData<'a, S> {
    Reconstruction { windows: &'a [Series<S>], mask_ratio: f64 },
    Forecast { examples: &'a [ForecastExample<S>] },
}

impl<S> ProbeData<'_, S> {
    pub fn head(&self) -> HeadKind {
        match self {
            Self::Reconstruction { .. } => HeadKind::Reconstruction,
            Self::Forecast { .. } => HeadKind::Forecast,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub seed: u64,
    pub clip_norm: f64,
    pub adamw: AdamWConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 32, lr_init: 1e-3, lr_final: 1e-4, seed: 13, clip_norm: 5.0, adamw: AdamWConfig::default() }
    }
}

/// Frozen-encoder forecasting features for each example: flattened `N·D`
/// embeddings plus the history's RevIN statistics.
pub fn forecast_features<S: Scalar>(model: &MomentModel<S>, examples: &[ForecastExample<S>]) -> Result<(Vec<Vec<S>>, Vec<RevinStats<S>>)> {
    let n = model.config.n_patches();
    let plan = PatchMaskPlan::all_observed(n);
    let mut feats = Vec::with_capacity(examples.len());
    let mut stats = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(32) {
        let batch: Vec<Window<'_, S>> = chunk
            .iter()
            .map(|e| Window { values: &e.history.values, observed: &e.history.observed, plan: &plan })
            .collect();
        feats.extend(model.embed_windows(&batch)?);
        for e in chunk {
            stats.push(RevinStats::fit(&e.history.values, &e.history.observed, model.config.revin_eps)?);
        }
    }
    Ok((feats, stats))
}

fn head_params<S: Scalar>(model: &MomentModel<S>, tape: &mut Tape<S>, prefix: &str) -> (BoundParams, Vec<String>) {
    let vars: Vec<(String, Var)> = model
        .weights
        .named()
        .into_iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .map(|(n, t)| {
            let v = tape.param(t.clone());
            (n, v)
        })
        .collect();
    let names = vars.iter().map(|(n, _)| n.clone()).collect();
    (BoundParams { vars }, names)
}

/// Trains only the head matching `data`; every other parameter stays bit-identical.
pub fn linear_probe<S: Scalar>(model: &mut MomentModel<S>, data: ProbeData<'_, S>, cfg: &ProbeConfig) -> Result<TrainLog> {
    if cfg.batch_size == 0 || !(cfg.clip_norm > 0.0) {
        bail!(Config, "probe needs a positive batch size and clip norm");
    }
    let schedule = CosineSchedule::new(cfg.lr_init, cfg.lr_final, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamWState::new(cfg.adamw);
    match data {
        ProbeData::Reconstruction { windows, mask_ratio } => {
            let windows = prepare_windows(model, windows)?;
            let mut log = TrainLog { steps: Vec::new(), data_digest: names_digest(windows.iter().map(|s| s.name())) };
            let per_epoch = windows.len().div_ceil(cfg.batch_size);
            let total = cfg.epochs * per_epoch;
            let mut stream = BatchStream::new(windows.len(), cfg.batch_size);
            let trainable: Vec<String> = model.weights.named().into_iter().map(|(n, _)| n).filter(|n| n.starts_with("head.recon")).collect();
            for step in 0..total {
                let lr = lr_at(&schedule, step, total)?;
                let batch: Vec<&Series<S>> = stream.next(&mut rng).into_iter().map(|i| &windows[i]).collect();
                let plans = batch_plans(model, &batch, mask_ratio, &mut rng)?;
                let mut tape = Tape::new();
                let params = model.bind(&mut tape, |n| trainable.iter().any(|t| t == n));
                let loss = reconstruction_loss(model, &mut tape, &params, &batch, &plans)?;
                log.push(TrainStep { step, lr, loss: loss_value(&tape, loss, step)? })?;
                optimize(model, &mut state, &tape, &params, &trainable, loss, cfg.clip_norm, lr)?;
            }
            Ok(log)
        }
        ProbeData::Forecast { examples } => {
            let Some(horizon) = model.forecast_horizon() else {
                bail!(Config, "forecasting head not attached");
            };
            if examples.is_empty() {
                bail!(EmptySeries, "no forecasting examples to probe on");
            }
            if let Some(e) = examples.iter().find(|e| e.target.len() != horizon) {
                bail!(Config, "example target has {} steps, head forecasts {horizon}", e.target.len());
            }
            let mut log = TrainLog { steps: Vec::new(), data_digest: names_digest(examples.iter().map(|e| e.history.name())) };
            if cfg.epochs == 0 {
                return Ok(log);
            }
            let (features, stats) = forecast_features(model, examples)?;
            let targets: Vec<Vec<S>> = examples.iter().zip(&stats).map(|(e, st)| st.normalize(&e.target, &vec![true; horizon])).collect();
            let width = features[0].len();
            let per_epoch = examples.len().div_ceil(cfg.batch_size);
            let total = cfg.epochs * per_epoch;
            let mut stream = BatchStream::new(examples.len(), cfg.batch_size);
            for step in 0..total {
                let lr = lr_at(&schedule, step, total)?;
                let idx = stream.next(&mut rng);
                let mut tape = Tape::new();
                let (params, names) = head_params(model, &mut tape, "head.forecast");
                let x: Vec<S> = idx.iter().flat_map(|&i| features[i].iter().copied()).collect();
                let x = tape.constant(Tensor::new(&[idx.len(), width], x)?);
                let pred = model.forecast_from_features(&mut tape, &params, x)?;
                let y: Vec<S> = idx.iter().flat_map(|&i| targets[i].iter().copied()).collect();
                let loss = tape.weighted_mse(pred, &y, &vec![S::one(); y.len()])?;
                log.push(TrainStep { step, lr, loss: loss_value(&tape, loss, step)? })?;
                optimize(model, &mut state, &tape, &params, &names, loss, cfg.clip_norm, lr)?;
            }
            Ok(log)
        }
    }
}

#[cfg(test)]
mod tests;
