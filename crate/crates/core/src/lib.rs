//! Masked-patch pre-training of a small time-series transformer encoder,
//! with zero-shot and linear-probe task adapters, evaluation metrics,
//! statistical baselines and interpretability probes.

pub mod baselines;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod pretrain;
pub mod probes;
pub mod report;
pub mod scalar;
pub mod tasks;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used for training, checkpoints and the command-line tool.
pub type Real = f32;
/// Model at the training precision.
pub type Model = model::MomentModel<Real>;
/// Series at the training precision.
pub type TimeSeries = data::Series<Real>;
