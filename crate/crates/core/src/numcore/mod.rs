//! Dense tensors, tape-based reverse-mode differentiation, and the optimizer recipe.

mod optim;
mod schedule;
mod tape;
mod tensor;

pub use optim::{clip_global_norm, global_norm, AdamWConfig, AdamWState, ParamUpdate};
pub use schedule::CosineSchedule;
pub use tape::{AttnShape, Gradients, Tape, Var};
pub use tensor::Tensor;
