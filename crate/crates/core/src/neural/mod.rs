//! Fully convolutional denoising autoencoder with hand-derived gradients.

mod adam;
mod checkpoint;
mod gradcheck;
pub mod layers;
mod model;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_header, save_checkpoint, CheckpointHeader, TensorInfo};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{
    l2_loss, Activation, BatchNorm, FcnConfig, FcnModel, ForwardCache, Gradients, Layer, LayerGrads, LayerKind,
    LayerSpec, Mode,
};
