//! Sparse feature-space adversarial attacks against convolutional saliency
//! networks.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only numerics:
//! tensors and layer primitives with hand-written backward passes, the toy
//! saliency networks and their trainer, the attack losses, the iterative
//! targeted and nontargeted attacks, and the saliency/perceptibility metrics.
//! File formats, the CLI and the experiment drivers live in the `salattack`
//! crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attack;
pub mod data;
mod error;
pub mod layers;
pub mod losses;
mod math;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
