//! Self-contained neural network core: dense and strided 2-D convolution
//! layers, channel/spatial attention, global average pooling, Adam, a
//! binary checkpoint format, and finite-difference gradient checking.
//!
//! Everything runs in f64 on a per-sample basis; reverse-mode gradients are
//! hand-written per layer and validated against central differences.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod net;
mod params;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, CheckpointError};
pub use gradcheck::{gradient_check, max_relative_error};
pub use layers::{
    ChannelAttention, Conv2d, Dense, GlobalAvgPool, SpatialAttention,
};
pub use net::{ActorArch, ActorTape, ConvSpec, CriticArch, CriticTape, NetSpec};
pub use params::{BlockId, Init, NetworkParams, ParamBlock, ParamBuilder};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch in {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        got: String,
    },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
}
