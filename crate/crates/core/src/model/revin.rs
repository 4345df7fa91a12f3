use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Per-instance location and scale, estimated over observed timesteps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevinStats<S> {
    pub mean: S,
    /// Population standard deviation, floored at the configured epsilon.
    pub std: S,
}

impl<S: Scalar> RevinStats<S> {
    /// Population mean and standard deviation of `values` where `mask` is set.
    pub fn fit(values: &[S], mask: &[bool], eps: f64) -> Result<Self> {
        if values.len() != mask.len() {
            bail!(Dimension, "{} values with {} mask entries", values.len(), mask.len());
        }
        // f64 accumulation keeps a constant series' mean exact in f32.
        let (mut n, mut total) = (0usize, 0f64);
        for (&v, _) in values.iter().zip(mask).filter(|(_, &m)| m) {
            n += 1;
            total += v.f64();
        }
        if n == 0 {
            bail!(EmptySeries, "no observed timesteps to normalize");
        }
        let mean = total / n as f64;
        let var = values
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| (v.f64() - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        Ok(Self { mean: S::of(mean), std: S::of(var.sqrt().max(eps)) })
    }

    pub fn identity() -> Self {
        Self { mean: S::zero(), std: S::one() }
    }

    /// `(x − μ)/σ` at observed entries, 0 elsewhere.
    pub fn normalize(&self, values: &[S], observed: &[bool]) -> Vec<S> {
        values
            .iter()
            .zip(observed)
            .map(|(&v, &o)| if o { (v - self.mean) / self.std } else { S::zero() })
            .collect()
    }

    pub fn denormalize(&self, values: &[S]) -> Vec<S> {
        values.iter().map(|&v| v * self.std + self.mean).collect()
    }
}

/// Normalizes the observed part of a series and returns the statistics needed to undo it.
pub fn revin_normalize<S: Scalar>(values: &[S], observed: &[bool], eps: f64) -> Result<(Vec<S>, RevinStats<S>)> {
    let stats = RevinStats::fit(values, observed, eps)?;
    Ok((stats.normalize(values, observed), stats))
}

pub fn revin_denormalize<S: Scalar>(values: &[S], stats: &RevinStats<S>) -> Vec<S> {
    stats.denormalize(values)
}
