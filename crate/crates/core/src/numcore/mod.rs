//! Dense tensors, reverse-mode differentiation and the AdamW optimizer.

pub mod kernels;
pub mod optim;
pub mod params;
pub mod real;
pub mod tape;
pub mod tensor;

pub use optim::{adamw_step, clip_grad_norm, AdamWConfig, AdamWState, Moments};
pub use params::{ParamEntry, ParamGroup, ParamId, ParamStore};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{cross_entropy, layer_norm, matmul, softmax, Tensor};

/// Layer-norm epsilon used throughout the encoders.
pub const LAYER_NORM_EPS: f64 = 1e-5;
