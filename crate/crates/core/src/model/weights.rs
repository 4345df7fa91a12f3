use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::config::ModelConfig;
use crate::error::{bail, Result};
use crate::numcore::Tensor;
use crate::scalar::Scalar;

/// One pre-norm encoder block. No additive biases anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<S> {
    pub attn_norm: Tensor<S>,
    pub q: Tensor<S>,
    pub k: Tensor<S>,
    pub v: Tensor<S>,
    pub o: Tensor<S>,
    /// `[n_rel_buckets, n_heads]` additive attention bias.
    pub rel_bias: Tensor<S>,
    pub ff_norm: Tensor<S>,
    pub w1: Tensor<S>,
    pub w2: Tensor<S>,
}

/// Flatten-and-project head mapping `N·D` patch features to `horizon` values.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastHead<S> {
    pub horizon: usize,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<S> {
    pub patch_weight: Tensor<S>,
    pub patch_bias: Tensor<S>,
    pub mask_token: Tensor<S>,
    pub layers: Vec<LayerWeights<S>>,
    pub recon_weight: Tensor<S>,
    pub recon_bias: Tensor<S>,
    pub forecast: Option<ForecastHead<S>>,
}

/// Prefix shared by every task-head parameter name.
pub const HEAD_PREFIX: &str = "head.";

fn fan_in<S: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<S> {
    let bound = 1.0 / (rows as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::from_fn(&[rows, cols], |_| S::of(dist.sample(rng)))
}

impl<S: Scalar> ForecastHead<S> {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, horizon: usize, rng: &mut R) -> Result<Self> {
        if horizon == 0 {
            bail!(Config, "forecast horizon must be positive");
        }
        let features = config.n_patches() * config.d_model;
        Ok(Self { horizon, weight: fan_in(features, horizon, rng), bias: Tensor::zeros(&[horizon]) })
    }
}

impl<S: Scalar> ModelWeights<S> {
    /// Fan-in uniform matrices, zero biases, unit gains and a standard-normal mask embedding.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (p, d, ff) = (config.patch_len, config.d_model, config.d_ff);
        let patch_weight = fan_in(p, d, rng);
        let mask_token = Tensor::from_fn(&[d], |_| {
            let z: f64 = StandardNormal.sample(rng);
            S::of(z)
        });
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                attn_norm: Tensor::full(&[d], S::one()),
                q: fan_in(d, d, rng),
                k: fan_in(d, d, rng),
                v: fan_in(d, d, rng),
                o: fan_in(d, d, rng),
                rel_bias: fan_in(config.n_rel_buckets, config.n_heads, rng),
                ff_norm: Tensor::full(&[d], S::one()),
                w1: fan_in(d, ff, rng),
                w2: fan_in(ff, d, rng),
            })
            .collect();
        Ok(Self {
            patch_weight,
            patch_bias: Tensor::zeros(&[d]),
            mask_token,
            layers,
            recon_weight: fan_in(d, p, rng),
            recon_bias: Tensor::zeros(&[p]),
            forecast: None,
        })
    }

    /// Every parameter with its canonical name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = vec![
            ("embed.patch_weight".to_string(), &self.patch_weight),
            ("embed.patch_bias".to_string(), &self.patch_bias),
            ("embed.mask_token".to_string(), &self.mask_token),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (suffix, t) in [
                ("attn_norm", &l.attn_norm),
                ("attn.q", &l.q),
                ("attn.k", &l.k),
                ("attn.v", &l.v),
                ("attn.o", &l.o),
                ("attn.rel_bias", &l.rel_bias),
                ("ff_norm", &l.ff_norm),
                ("ff.w1", &l.w1),
                ("ff.w2", &l.w2),
            ] {
                out.push((format!("layers.{i}.{suffix}"), t));
            }
        }
        out.push(("head.recon.weight".to_string(), &self.recon_weight));
        out.push(("head.recon.bias".to_string(), &self.recon_bias));
        if let Some(h) = &self.forecast {
            out.push(("head.forecast.weight".to_string(), &h.weight));
            out.push(("head.forecast.bias".to_string(), &h.bias));
        }
        out
    }

    /// Mutable twin of [`Self::named`], same order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<S>)> {
        let mut out = vec![
            ("embed.patch_weight".to_string(), &mut self.patch_weight),
            ("embed.patch_bias".to_string(), &mut self.patch_bias),
            ("embed.mask_token".to_string(), &mut self.mask_token),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (suffix, t) in [
                ("attn_norm", &mut l.attn_norm),
                ("attn.q", &mut l.q),
                ("attn.k", &mut l.k),
                ("attn.v", &mut l.v),
                ("attn.o", &mut l.o),
                ("attn.rel_bias", &mut l.rel_bias),
                ("ff_norm", &mut l.ff_norm),
                ("ff.w1", &mut l.w1),
                ("ff.w2", &mut l.w2),
            ] {
                out.push((format!("layers.{i}.{suffix}"), t));
            }
        }
        out.push(("head.recon.weight".to_string(), &mut self.recon_weight));
        out.push(("head.recon.bias".to_string(), &mut self.recon_bias));
        if let Some(h) = &mut self.forecast {
            out.push(("head.forecast.weight".to_string(), &mut h.weight));
            out.push(("head.forecast.bias".to_string(), &mut h.bias));
        }
        out
    }

    /// Shapes implied by `config` (and a forecasting head of `horizon`, if any), in canonical order.
    pub fn expected_shapes(config: &ModelConfig, horizon: Option<usize>) -> Vec<(String, Vec<usize>)> {
        let (p, d, ff, n) = (config.patch_len, config.d_model, config.d_ff, config.n_patches());
        let mut out = vec![
            ("embed.patch_weight".to_string(), vec![p, d]),
            ("embed.patch_bias".to_string(), vec![d]),
            ("embed.mask_token".to_string(), vec![d]),
        ];
        for i in 0..config.n_layers {
            for (suffix, shape) in [
                ("attn_norm", vec![d]),
                ("attn.q", vec![d, d]),
                ("attn.k", vec![d, d]),
                ("attn.v", vec![d, d]),
                ("attn.o", vec![d, d]),
                ("attn.rel_bias", vec![config.n_rel_buckets, config.n_heads]),
                ("ff_norm", vec![d]),
                ("ff.w1", vec![d, ff]),
                ("ff.w2", vec![ff, d]),
            ] {
                out.push((format!("layers.{i}.{suffix}"), shape));
            }
        }
        out.push(("head.recon.weight".to_string(), vec![d, p]));
        out.push(("head.recon.bias".to_string(), vec![p]));
        if let Some(h) = horizon {
            out.push(("head.forecast.weight".to_string(), vec![n * d, h]));
            out.push(("head.forecast.bias".to_string(), vec![h]));
        }
        out
    }

    pub fn cast<T: Scalar>(&self) -> ModelWeights<T> {
        ModelWeights {
            patch_weight: self.patch_weight.cast(),
            patch_bias: self.patch_bias.cast(),
            mask_token: self.mask_token.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    attn_norm: l.attn_norm.cast(),
                    q: l.q.cast(),
                    k: l.k.cast(),
                    v: l.v.cast(),
                    o: l.o.cast(),
                    rel_bias: l.rel_bias.cast(),
                    ff_norm: l.ff_norm.cast(),
                    w1: l.w1.cast(),
                    w2: l.w2.cast(),
                })
                .collect(),
            recon_weight: self.recon_weight.cast(),
            recon_bias: self.recon_bias.cast(),
            forecast: self.forecast.as_ref().map(|h| ForecastHead {
                horizon: h.horizon,
                weight: h.weight.cast(),
                bias: h.bias.cast(),
            }),
        }
    }
}
