//! The patch-transformer encoder with its normalization, embedding and heads.

mod checkpoint;
mod config;
mod forward;
mod patch;
mod position;
mod revin;
mod weights;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry, DEFAULT_MANIFEST};
pub use config::{ModelConfig, NORM_EPS};
pub use forward::{pool_rows, BoundParams, Encoded, MaskFill, MomentModel, Window};
pub use patch::{left_pad, patchify, PatchMaskPlan};
pub use position::{bucket_map, relative_bucket, sinusoidal_pe};
pub use revin::{revin_denormalize, revin_normalize, RevinStats};
pub use weights::{ForecastHead, LayerWeights, ModelWeights, HEAD_PREFIX};
