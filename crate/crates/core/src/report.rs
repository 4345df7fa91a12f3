//! Evaluation reports: a sorted metric map with the provenance needed to replay a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::metrics::{adjusted_best_f1, vus_roc, ScoredSeries, VUS_BUFFER};

/// A metric value, or the reason it could not be computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricValue {
    Value(f64),
    Error { error: String },
}

impl MetricValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(*v),
            Self::Error { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub task: String,
    pub dataset: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub metrics: BTreeMap<String, MetricValue>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_series: BTreeMap<String, BTreeMap<String, f64>>,
    /// Free-form string facts about the run (method used, data digest, output paths).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn new(task: impl Into<String>, dataset: impl Into<String>) -> Self {
        Self { task: task.into(), dataset: dataset.into(), ..Self::default() }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), MetricValue::Value(value));
    }

    /// Records either the value or the error text.
    pub fn set_result(&mut self, name: &str, value: Result<f64>) {
        let v = match value {
            Ok(v) => MetricValue::Value(v),
            Err(e) => MetricValue::Error { error: e.to_string() },
        };
        self.metrics.insert(name.to_string(), v);
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).and_then(MetricValue::value)
    }

    pub fn set_series(&mut self, series: &str, name: &str, value: f64) {
        self.per_series.entry(series.to_string()).or_default().insert(name.to_string(), value);
    }

    pub fn detail(&mut self, key: &str, value: impl Into<String>) {
        self.details.insert(key.to_string(), value.into());
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// Adds `adj_best_f1` and `vus_roc` for anomaly scores against labels.
    ///
    /// With no positive labels the adjusted F1 is 0 and a warning is attached;
    /// single-class labels leave `vus_roc` as an error entry.
    pub fn add_anomaly_metrics(&mut self, scored: &ScoredSeries) {
        if scored.n_positive() == 0 {
            self.warn("no anomalous timesteps in the labels; adj_best_f1 set to 0");
        }
        self.set("adj_best_f1", adjusted_best_f1(scored));
        self.set_result("vus_roc", vus_roc(scored, VUS_BUFFER));
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// SHA-256 of the canonical (key-sorted, compact) JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    // Value's map is ordered, so the encoding does not depend on field order.
    let canonical = serde_json::to_string(&serde_json::to_value(config)?)?;
    Ok(Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}
