//! The feature-to-text encoder-decoder transformer.
//!
//! The encoder linearly projects per-frame visual features to the model
//! width, adds sinusoidal positions and runs pre-norm self-attention blocks.
//! The decoder embeds previous tokens, normalizes the embedding, and runs
//! pre-norm blocks of causal self-attention, cross-attention and FFN before
//! a bias-free output projection and log-softmax.

mod checkpoint;
mod config;
mod forward;
mod params;
mod positions;

pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC};
pub use config::{Activation, ModelConfig};
pub use forward::{attention_mask, EncoderMemory, Forward, Model};
pub use params::{
    check_shapes, init_params, parameter_count, Attention, DecoderLayer, EncoderLayer, Linear, ModelParams, Norm,
    Params,
};
pub use positions::SinusoidalTable;
