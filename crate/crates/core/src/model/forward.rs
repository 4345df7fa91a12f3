//! Forward pass: RevIN → patching → patch/mask embedding → positions →
//! pre-norm encoder → heads.

use rand::Rng;

use super::config::{ModelConfig, NORM_EPS};
use super::patch::PatchMaskPlan;
use super::position::{bucket_map, sinusoidal_pe};
use super::revin::RevinStats;
use super::weights::{ForecastHead, ModelWeights, HEAD_PREFIX};
use crate::error::{bail, Result};
use crate::numcore::{AttnShape, Gradients, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// One fixed-length model input.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a, S> {
    pub values: &'a [S],
    /// Timestep observation mask (padding and missing values are `false`).
    pub observed: &'a [bool],
    /// Patches to hide behind the mask embedding, on top of unobserved ones.
    pub plan: &'a PatchMaskPlan,
}

/// How hidden patches enter the encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaskFill {
    /// Substitute the learned mask embedding.
    #[default]
    Token,
    /// Zero the hidden timesteps (in normalized space) and project them like observed data.
    Zeros,
}

/// Parameters placed on a tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    /// `(name, var)` in [`ModelWeights::named`] order.
    pub vars: Vec<(String, Var)>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Var {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    /// Gradient buffers in binding order (zeros where nothing flowed).
    pub fn collect_grads<S: Scalar>(&self, tape: &Tape<S>, grads: &Gradients<S>) -> Vec<Vec<S>> {
        self.vars.iter().map(|&(_, v)| grads.get_or_zeros(v, tape.value(v).numel())).collect()
    }
}

/// Everything a forward pass produces besides the tape itself.
#[derive(Clone, Debug)]
pub struct Encoded<S> {
    /// `[batch·N, D]` final-layer patch embeddings.
    pub hidden: Var,
    /// Attention weights `[batch, heads, N, N]`, one per layer.
    pub attention: Vec<Var>,
    pub stats: Vec<RevinStats<S>>,
    /// RevIN-normalized inputs, zero where unobserved.
    pub normalized: Vec<Vec<S>>,
    /// Effective per-patch embedding route after combining plan and observedness.
    pub embedded_observed: Vec<PatchMaskPlan>,
}

/// Configuration plus weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentModel<S> {
    pub config: ModelConfig,
    pub weights: ModelWeights<S>,
}

impl<S: Scalar> MomentModel<S> {
    pub fn new(config: ModelConfig, weights: ModelWeights<S>) -> Result<Self> {
        config.validate()?;
        let horizon = weights.forecast.as_ref().map(|h| h.horizon);
        let expected = ModelWeights::<S>::expected_shapes(&config, horizon);
        let actual = weights.named();
        if expected.len() != actual.len() {
            bail!(Config, "weights hold {} tensors, config implies {}", actual.len(), expected.len());
        }
        for ((name, shape), (_, t)) in expected.iter().zip(&actual) {
            if t.shape() != shape.as_slice() {
                bail!(Config, "{name} has shape {:?}, config implies {shape:?}", t.shape());
            }
        }
        Ok(Self { config, weights })
    }

    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let weights = ModelWeights::init(&config, rng)?;
        Ok(Self { config, weights })
    }

    pub fn attach_forecast_head<R: Rng + ?Sized>(&mut self, horizon: usize, rng: &mut R) -> Result<()> {
        self.weights.forecast = Some(ForecastHead::init(&self.config, horizon, rng)?);
        Ok(())
    }

    pub fn forecast_horizon(&self) -> Option<usize> {
        self.weights.forecast.as_ref().map(|h| h.horizon)
    }

    /// Puts every parameter on `tape`; `trainable(name)` decides which receive gradients.
    pub fn bind(&self, tape: &mut Tape<S>, trainable: impl Fn(&str) -> bool) -> BoundParams {
        let vars = self
            .weights
            .named()
            .into_iter()
            .map(|(name, t)| {
                let v = tape.leaf(t.clone(), trainable(&name));
                (name, v)
            })
            .collect();
        BoundParams { vars }
    }

    /// Binds with only task-head parameters trainable.
    pub fn bind_heads_only(&self, tape: &mut Tape<S>) -> BoundParams {
        self.bind(tape, |n| n.starts_with(HEAD_PREFIX))
    }

    fn check_window(&self, w: &Window<'_, S>) -> Result<()> {
        let (t, n) = (self.config.seq_len, self.config.n_patches());
        if w.values.len() != t || w.observed.len() != t {
            bail!(Dimension, "window has {} values / {} mask entries, model expects {t}", w.values.len(), w.observed.len());
        }
        if w.plan.len() != n {
            bail!(Dimension, "plan covers {} patches, model has {n}", w.plan.len());
        }
        Ok(())
    }

    /// Runs the embedding and encoder stack on a batch of windows.
    pub fn encode(&self, tape: &mut Tape<S>, params: &BoundParams, batch: &[Window<'_, S>], fill: MaskFill) -> Result<Encoded<S>> {
        if batch.is_empty() {
            bail!(EmptySeries, "empty batch");
        }
        let cfg = &self.config;
        let (p, n, d) = (cfg.patch_len, cfg.n_patches(), cfg.d_model);

        let mut stats = Vec::with_capacity(batch.len());
        let mut normalized = Vec::with_capacity(batch.len());
        let mut routes = Vec::with_capacity(batch.len());
        let mut patch_values = Vec::with_capacity(batch.len() * cfg.seq_len);
        let mut keep = Vec::with_capacity(batch.len() * n);
        for w in batch {
            self.check_window(w)?;
            let observed_patches = PatchMaskPlan::from_timesteps(w.observed, p)?;
            // statistics come only from what the encoder is allowed to see
            let visible: Vec<bool> = w
                .observed
                .iter()
                .zip(w.plan.timestep_mask(p))
                .map(|(&o, pl)| o && pl)
                .collect();
            let st = RevinStats::fit(w.values, &visible, cfg.revin_eps)?;
            let norm = st.normalize(w.values, w.observed);
            let route = match fill {
                MaskFill::Token => observed_patches.and(w.plan),
                MaskFill::Zeros => observed_patches,
            };
            for (i, chunk) in norm.chunks(p).enumerate() {
                if fill == MaskFill::Zeros && !w.plan.is_observed(i) {
                    patch_values.extend(std::iter::repeat_n(S::zero(), p));
                } else {
                    patch_values.extend_from_slice(chunk);
                }
            }
            keep.extend_from_slice(route.flags());
            stats.push(st);
            normalized.push(norm);
            routes.push(route);
        }
        let b = batch.len();

        let patches = tape.constant(Tensor::new(&[b * n, p], patch_values)?);
        let emb = self.embed_patches(tape, params, patches, &keep)?;

        let pe = sinusoidal_pe::<S>(n, d)?;
        let tiled: Vec<S> = (0..b).flat_map(|_| pe.data().iter().copied()).collect();
        let pe = tape.constant(Tensor::new(&[b * n, d], tiled)?);
        let x = tape.add(emb, pe)?;

        let (hidden, attention) = self.encoder_forward(tape, params, x, b)?;

        Ok(Encoded { hidden, attention, stats, normalized, embedded_observed: routes })
    }

    /// Row `i` of `[rows, P]` patches becomes `W_embᵀ·patch + b` where `keep[i]`, else the mask embedding.
    pub fn embed_patches(&self, tape: &mut Tape<S>, params: &BoundParams, patches: Var, keep: &[bool]) -> Result<Var> {
        let proj = tape.matmul(patches, params.get("embed.patch_weight"))?;
        let proj = tape.add_row(proj, params.get("embed.patch_bias"))?;
        tape.select_rows(proj, params.get("embed.mask_token"), keep)
    }

    /// Pre-norm encoder stack over `[batch·N, D]`: `x + Attn(norm(x))`, then `x + FF(norm(x))`.
    /// Returns the output and each layer's attention weights.
    pub fn encoder_forward(&self, tape: &mut Tape<S>, params: &BoundParams, mut x: Var, batch: usize) -> Result<(Var, Vec<Var>)> {
        let cfg = &self.config;
        let n = cfg.n_patches();
        let b = batch;
        let buckets = bucket_map(n, cfg.n_rel_buckets, cfg.rel_max_distance);
        let shape = AttnShape { batch: b, heads: cfg.n_heads, seq: n, head_dim: cfg.head_dim() };
        let scale = S::of(1.0 / (cfg.head_dim() as f64).sqrt());
        let eps = S::of(NORM_EPS);
        let mut attention = Vec::with_capacity(cfg.n_layers);
        for layer in 0..cfg.n_layers {
            let name = |s: &str| format!("layers.{layer}.{s}");
            let h = tape.scale_norm(x, params.get(&name("attn_norm")), eps)?;
            let q = tape.matmul(h, params.get(&name("attn.q")))?;
            let k = tape.matmul(h, params.get(&name("attn.k")))?;
            let v = tape.matmul(h, params.get(&name("attn.v")))?;
            let scores = tape.attn_scores(q, k, shape, scale)?;
            let scores = tape.add_rel_bias(scores, params.get(&name("attn.rel_bias")), &buckets)?;
            let probs = tape.softmax_lastdim(scores);
            attention.push(probs);
            let mixed = tape.attn_mix(probs, v, shape)?;
            let out = tape.matmul(mixed, params.get(&name("attn.o")))?;
            x = tape.add(x, out)?;

            let h = tape.scale_norm(x, params.get(&name("ff_norm")), eps)?;
            let h = tape.matmul(h, params.get(&name("ff.w1")))?;
            let h = tape.relu(h);
            let h = tape.matmul(h, params.get(&name("ff.w2")))?;
            x = tape.add(x, h)?;
            tape.ensure_finite(x, &format!("encoder layer {layer}"))?;
        }

        Ok((x, attention))
    }

    /// Per-patch `D → P` projection; returns `[batch, T]` in normalized space.
    pub fn reconstruct(&self, tape: &mut Tape<S>, params: &BoundParams, hidden: Var) -> Result<Var> {
        let rows = tape.value(hidden).numel() / self.config.d_model;
        let batch = rows / self.config.n_patches();
        let out = tape.matmul(hidden, params.get("head.recon.weight"))?;
        let out = tape.add_row(out, params.get("head.recon.bias"))?;
        tape.reshape(out, &[batch, self.config.seq_len])
    }

    /// Flatten `N·D` per series and project to the horizon; `[batch, H]` in normalized space.
    pub fn forecast(&self, tape: &mut Tape<S>, params: &BoundParams, hidden: Var) -> Result<Var> {
        if self.weights.forecast.is_none() {
            bail!(Config, "forecasting head not attached");
        }
        let features = self.config.n_patches() * self.config.d_model;
        let batch = tape.value(hidden).numel() / features;
        let flat = tape.reshape(hidden, &[batch, features])?;
        self.forecast_from_features(tape, params, flat)
    }

    /// Forecast head applied to already-flattened `[batch, N·D]` features.
    pub fn forecast_from_features(&self, tape: &mut Tape<S>, params: &BoundParams, features: Var) -> Result<Var> {
        if self.weights.forecast.is_none() {
            bail!(Config, "forecasting head not attached");
        }
        let out = tape.matmul(features, params.get("head.forecast.weight"))?;
        tape.add_row(out, params.get("head.forecast.bias"))
    }

    /// Encodes and reconstructs a batch without gradients; denormalized outputs per window.
    pub fn reconstruct_windows(&self, batch: &[Window<'_, S>], fill: MaskFill) -> Result<Vec<Vec<S>>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, |_| false);
        let enc = self.encode(&mut tape, &params, batch, fill)?;
        let rec = self.reconstruct(&mut tape, &params, enc.hidden)?;
        let t = self.config.seq_len;
        Ok(tape
            .value(rec)
            .data()
            .chunks(t)
            .zip(&enc.stats)
            .map(|(row, st)| st.denormalize(row))
            .collect())
    }

    /// Final-layer patch embeddings for each window, `N·D` values each.
    pub fn embed_windows(&self, batch: &[Window<'_, S>]) -> Result<Vec<Vec<S>>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, |_| false);
        let enc = self.encode(&mut tape, &params, batch, MaskFill::Token)?;
        let features = self.config.n_patches() * self.config.d_model;
        Ok(tape.value(enc.hidden).data().chunks(features).map(<[S]>::to_vec).collect())
    }

    /// Mean of final-layer patch embeddings over patches holding at least one observed timestep.
    pub fn sequence_representation(&self, values: &[S], observed: &[bool]) -> Result<Vec<S>> {
        let plan = PatchMaskPlan::all_observed(self.config.n_patches());
        let hidden = self.embed_windows(&[Window { values, observed, plan: &plan }])?.remove(0);
        let include: Vec<bool> = observed.chunks(self.config.patch_len).map(|c| c.iter().any(|&o| o)).collect();
        pool_rows(&hidden, self.config.d_model, &include)
    }
}

/// Arithmetic mean of the rows of a flat `[rows, d]` matrix where `include` is set.
pub fn pool_rows<S: Scalar>(rows: &[S], d: usize, include: &[bool]) -> Result<Vec<S>> {
    let mut acc = vec![S::zero(); d];
    let mut count = 0usize;
    for (row, _) in rows.chunks(d).zip(include).filter(|(_, &k)| k) {
        count += 1;
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    if count == 0 {
        bail!(EmptySeries, "every patch is padding; nothing to pool");
    }
    let c = S::of(count as f64);
    Ok(acc.into_iter().map(|a| a / c).collect())
}
