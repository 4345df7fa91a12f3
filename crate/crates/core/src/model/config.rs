use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub patch_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    #[serde(default = "default_buckets")]
    pub n_rel_buckets: usize,
    #[serde(default = "default_max_distance")]
    pub rel_max_distance: usize,
    #[serde(default = "default_revin_eps")]
    pub revin_eps: f64,
}

fn default_buckets() -> usize {
    32
}
fn default_max_distance() -> usize {
    128
}
fn default_revin_eps() -> f64 {
    1e-5
}

/// Epsilon inside every scale-only normalization.
pub const NORM_EPS: f64 = 1e-6;

impl ModelConfig {
    fn desk(n_layers: usize, d_model: usize, n_heads: usize, d_ff: usize) -> Self {
        Self {
            seq_len: 512,
            patch_len: 8,
            d_model,
            n_layers,
            n_heads,
            d_ff,
            n_rel_buckets: default_buckets(),
            rel_max_distance: default_max_distance(),
            revin_eps: default_revin_eps(),
        }
    }

    pub fn tiny() -> Self {
        Self::desk(1, 32, 4, 64)
    }

    pub fn small() -> Self {
        Self::desk(2, 64, 4, 128)
    }

    pub fn base() -> Self {
        Self::desk(4, 128, 8, 256)
    }

    /// Looks up `tiny`, `small` or `base`.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "tiny" => Some(Self::tiny()),
            "small" => Some(Self::small()),
            "base" => Some(Self::base()),
            _ => None,
        }
    }

    pub fn n_patches(&self) -> usize {
        self.seq_len / self.patch_len
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.seq_len, self.patch_len, self.d_model, self.n_heads, self.d_ff, self.n_rel_buckets, self.rel_max_distance];
        if dims.contains(&0) {
            bail!(Config, "all model dimensions must be positive: {self:?}");
        }
        if self.seq_len % self.patch_len != 0 {
            bail!(Config, "seq_len {} is not a multiple of patch_len {}", self.seq_len, self.patch_len);
        }
        if self.d_model % self.n_heads != 0 {
            bail!(Config, "d_model {} is not divisible by {} heads", self.d_model, self.n_heads);
        }
        if self.d_model % 2 != 0 {
            bail!(Config, "sinusoidal positions need an even d_model, got {}", self.d_model);
        }
        if self.n_rel_buckets < 4 || self.n_rel_buckets % 2 != 0 {
            bail!(Config, "n_rel_buckets must be even and at least 4, got {}", self.n_rel_buckets);
        }
        if self.rel_max_distance <= self.n_rel_buckets / 4 {
            bail!(Config, "rel_max_distance {} must exceed the exact-offset range", self.rel_max_distance);
        }
        if !(self.revin_eps > 0.0) {
            bail!(Config, "revin_eps must be positive");
        }
        Ok(())
    }
}
