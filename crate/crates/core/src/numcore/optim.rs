use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::scalar::Scalar;

/// Decoupled-weight-decay Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { weight_decay: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for a fixed, ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamWState<S> {
    pub config: AdamWConfig,
    step_count: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

/// One parameter in an optimizer step.
pub struct ParamUpdate<'a, S> {
    pub name: &'a str,
    pub value: &'a mut [S],
    pub grad: &'a [S],
}

impl<S: Scalar> AdamWState<S> {
    pub fn new(config: AdamWConfig) -> Self {
        Self { config, step_count: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one bias-corrected Adam update plus `θ ← θ − lr·λ·θ` to every parameter.
    ///
    /// Parameters must be passed in the same order on every call. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [ParamUpdate<'_, S>], lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            bail!(Contract, "learning rate must be positive, got {lr}");
        }
        for p in params.iter() {
            if p.value.len() != p.grad.len() {
                bail!(Dimension, "parameter {} has {} values but {} gradients", p.name, p.value.len(), p.grad.len());
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    step: self.step_count as usize,
                    detail: format!("non-finite gradient in parameter {}", p.name),
                });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![S::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len()) {
            bail!(Dimension, "optimizer state does not match the parameter list");
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamWConfig { weight_decay, beta1, beta2, eps } = self.config;
        let bc1 = S::of(1.0 - beta1.powi(t));
        let bc2 = S::of(1.0 - beta2.powi(t));
        let (b1, b2) = (S::of(beta1), S::of(beta2));
        let (lr, decay, eps) = (S::of(lr), S::of(lr * weight_decay), S::of(eps));

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((theta, &g), mi), vi) in p.value.iter_mut().zip(p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (S::one() - b1) * g;
                *vi = b2 * *vi + (S::one() - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta = *theta - decay * *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Global L2 norm over every gradient buffer.
pub fn global_norm<S: Scalar>(grads: &[Vec<S>]) -> f64 {
    grads.iter().flatten().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt()
}

/// Rescales all gradients together so their global L2 norm is at most `max_norm`.
/// Returns the norm measured before clipping.
pub fn clip_global_norm<S: Scalar>(grads: &mut [Vec<S>], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        bail!(Contract, "max_norm must be positive, got {max_norm}");
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = S::of(max_norm / norm);
        for g in grads.iter_mut().flatten() {
            *g *= scale;
        }
    }
    Ok(norm)
}
