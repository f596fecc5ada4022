use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid layer {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },
    #[error("layer index {index} out of range (model has {count} layers)")]
    LayerOutOfRange { index: usize, count: usize },
    #[error("input image values must lie in [0, 1] (found {0})")]
    ImageRange(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("attack aborted at iteration {iteration}: {reason}")]
    AttackAborted { iteration: usize, reason: String },
    #[error("training diverged at epoch {epoch}, sample {sample}: loss {loss}")]
    Diverged { epoch: usize, sample: usize, loss: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
