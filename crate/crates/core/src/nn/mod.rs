//! A small deterministic tensor and reverse-mode differentiation kernel with
//! exactly the layers the model needs.

mod checkpoint;
pub mod gradcheck;
pub mod layers;
mod store;
mod tape;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use layers::{
    bce_with_logits, AttentionOutput, EncoderConfig, EncoderLayer, FeedForward, LayerNorm, Linear,
    MultiHeadAttention,
};
pub use store::ParameterStore;
pub use tape::{sigmoid, softplus, PoolMode, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
