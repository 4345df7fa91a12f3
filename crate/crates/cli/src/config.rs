//! Run configuration: a JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use moment_core::model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Seed used when neither flag, config nor environment provides one.
pub const DEFAULT_SEED: u64 = 13;
pub const SEED_ENV: &str = "MOMENT_MINI_SEED";

/// A named desk config, a path to a model config JSON file, or the config inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Inline(ModelConfig),
    Named(String),
}

impl ModelChoice {
    pub fn resolve(&self) -> anyhow::Result<ModelConfig> {
        let cfg = match self {
            Self::Inline(c) => c.clone(),
            Self::Named(name) => match ModelConfig::named(name) {
                Some(c) => c,
                None => {
                    let text = std::fs::read_to_string(name)
                        .map_err(|e| usage(format!("model {name:?} is neither tiny/small/base nor a readable file: {e}")))?;
                    serde_json::from_str(&text).map_err(|e| usage(format!("model config {name}: {e}")))?
                }
            },
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Every knob any command reads. A command ignores keys it has no use for;
/// keys outside this set are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub model: Option<ModelChoice>,
    pub ckpt: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub classes: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub test_classes: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub method: Option<String>,
    pub horizon: Option<usize>,
    pub stride: Option<usize>,
    pub season: Option<usize>,
    pub head: Option<String>,
    pub ratio: Option<f64>,
    pub mask_ratio: Option<f64>,
    pub window: Option<usize>,
    pub knn_window: Option<usize>,
    pub steps: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub lr_final: Option<f64>,
    pub kind: Option<String>,
    pub synth: Option<String>,
    pub noise: Option<f64>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($field:ident),* $(,)?) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Self) -> Self {
        overlay!(self, base;
            command, model, ckpt, data, labels, classes, test, test_classes, scores, out, seed, workers,
            method, horizon, stride, season, head, ratio, mask_ratio, window, knn_window, steps, epochs,
            batch_size, lr, lr_final, kind, synth, noise)
    }

    /// Flag, then config, then `MOMENT_MINI_SEED`, then 13.
    pub fn resolve_seed(&mut self) -> anyhow::Result<u64> {
        let seed = match self.seed {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
                Err(_) => DEFAULT_SEED,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> anyhow::Result<&'a T> {
        value.as_ref().ok_or_else(|| usage(format!("missing required option --{}", key.replace('_', "-"))))
    }

    /// Range checks shared by every command, run before any data is read.
    pub fn validate(&self) -> anyhow::Result<()> {
        let unit = |v: Option<f64>, key: &str| match v {
            Some(r) if !(r > 0.0 && r < 1.0) => Err(usage(format!("--{key} must lie in (0, 1), got {r}"))),
            _ => Ok(()),
        };
        unit(self.ratio, "ratio")?;
        unit(self.mask_ratio, "mask-ratio")?;
        let positive = [
            (self.horizon, "horizon"),
            (self.stride, "stride"),
            (self.season, "season"),
            (self.window, "window"),
            (self.knn_window, "knn-window"),
            (self.steps, "steps"),
            (self.epochs, "epochs"),
            (self.batch_size, "batch-size"),
            (self.workers, "workers"),
        ];
        for (v, key) in positive {
            if v == Some(0) {
                return Err(usage(format!("--{key} must be positive")));
            }
        }
        for (v, key) in [(self.lr, "lr"), (self.lr_final, "lr-final")] {
            if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                return Err(usage(format!("--{key} must be a positive number")));
            }
        }
        if self.noise.is_some_and(|x| !(x >= 0.0 && x.is_finite())) {
            return Err(usage("--noise must be non-negative"));
        }
        Ok(())
    }

    /// The effective configuration without unset keys, as hashed into the report.
    pub fn canonical(&self) -> anyhow::Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.retain(|_, x| !x.is_null());
        }
        Ok(v)
    }
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}
