//! File formats, experiment drivers and the command-line front end for
//! feature-space adversarial attacks on saliency models.

mod error;

pub mod experiments;
pub mod io;
pub mod manifest;
pub mod plan;
pub mod pnm;
pub mod report;
pub mod runner;
pub mod sft;
pub mod stats;

pub use error::{Error, Result};
pub use salattack_core as core;
