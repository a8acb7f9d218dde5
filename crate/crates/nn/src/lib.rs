//! Dense tensors, a recording tape with reverse-mode gradients for the
//! layers of a convolutional receiver, and an AdamW optimizer.

mod error;
pub mod gradcheck;
mod kernels;
mod layer;
mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use error::{Error, Result};
pub use layer::{pad_before, LayerKind, LayerSpec};
pub use optim::{AdamW, LrSchedule};
pub use params::{BnUpdate, Gradients, NetParams, Param, ParamId, ParamKind};
pub use scalar::Scalar;
pub use tape::{Mode, Tape, Var, BN_EPSILON, BN_MOMENTUM, PROB_CLAMP};
pub use tensor::Tensor;
