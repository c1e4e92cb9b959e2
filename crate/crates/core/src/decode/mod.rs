//! Beam search and greedy decoding.

mod search;
mod transformer;

pub use search::{beam_search, greedy, DecodeConfig, Hypothesis, StepModel};
pub use transformer::{translate, translate_all, translate_greedy, EncodedSource};
