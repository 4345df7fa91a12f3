use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Half-cosine decay from `lr_init` to `lr_final` over `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineSchedule {
    pub lr_init: f64,
    pub lr_final: f64,
    pub total_steps: usize,
}

impl Default for CosineSchedule {
    fn default() -> Self {
        Self { lr_init: 1e-4, lr_final: 1e-5, total_steps: 2000 }
    }
}

impl CosineSchedule {
    pub fn new(lr_init: f64, lr_final: f64, total_steps: usize) -> Result<Self> {
        let s = Self { lr_init, lr_final, total_steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > 0.0 && self.lr_final > 0.0) || self.total_steps == 0 {
            bail!(Config, "cosine schedule needs positive rates and steps, got {self:?}");
        }
        if self.lr_final > self.lr_init {
            bail!(Config, "final learning rate {} exceeds initial {}", self.lr_final, self.lr_init);
        }
        Ok(())
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            bail!(Contract, "step {step} outside schedule of {} steps", self.total_steps);
        }
        let progress = step as f64 / self.total_steps as f64;
        Ok(self.lr_final + 0.5 * (self.lr_init - self.lr_final) * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}
