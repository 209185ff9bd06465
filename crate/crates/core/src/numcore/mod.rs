//! Minimal reverse-mode numeric core.
//!
//! Layers do not build a dynamic graph. Each forward pass returns the values
//! its backward pass needs, and the backward pass accumulates parameter
//! gradients into a [`Gradients`] buffer laid out like the [`ParamStore`].

mod activation;
mod adam;
mod dense;
mod gradcheck;
mod lstm;
mod params;
mod tensor;

pub use activation::{relu, sigmoid, softmax, softmax_in_place};
pub use adam::{AdamConfig, AdamState};
pub use dense::{Activation, DenseLayer, FeedForward, FeedForwardTrace};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use lstm::{LstmCell, LstmStep};
pub use params::{glorot_uniform, Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
#[allow(unused_imports)]
pub(crate) use tensor::{axpy, dot};
