//! From-scratch CNN: tensors, layers with hand-written backward passes,
//! the single-layer model, Adam, FXCK checkpoints and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{argmax_row, backward, forward, predict, ConvGroupSpec, ForwardTrace, Gradients, Mode, ModelConfig, ModelParams};
pub use tensor::{Real, Tensor};
