//! Fully convolutional neural receiver: input assembly, architecture presets,
//! the restricted pilot-only variant, bit masking and checkpoints.

mod checkpoint;
mod config;
mod error;
mod input;
mod model;

pub use checkpoint::{load_checkpoint, load_into, read_checkpoint, save_checkpoint, Checkpoint, MAGIC};
pub use config::{BlockSpec, DeepRxConfig, RestrictedSpec, PRESETS};
pub use error::{Error, Result};
pub use input::{build_input, data_channels, InputTensor, Layout};
pub use model::{loss_targets, mask_llrs, Batch, DeepRx, OUTPUT_INIT_GAIN};
