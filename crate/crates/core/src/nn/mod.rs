//! Minimal dense-network substrate shared by the neural estimators.
//!
//! Everything here is batch-oriented with row-major `f64` buffers and explicit
//! gradient storage; there is no autodiff.

mod adam;
mod clip;
mod layer;
mod mlp;
mod scheduler;

pub use adam::{adam_step, AdamConfig, AdamState, WeightDecayMode};
pub use clip::clip_grad_norm;
pub use layer::{DenseLayer, LayerNorm, LAYER_NORM_EPS};
pub use mlp::{ForwardCache, MlpNet, DEFAULT_HIDDEN, DEFAULT_LEAKY_SLOPE};
pub use scheduler::PlateauScheduler;

/// A trainable tensor and its gradient buffer, viewed as flat slices.
pub struct ParamMut<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

impl<'a> ParamMut<'a> {
    pub fn new(name: impl Into<String>, value: &'a mut [f64], grad: &'a mut [f64]) -> Self {
        debug_assert_eq!(value.len(), grad.len());
        Self { name: name.into(), value, grad }
    }
}
