//! Dense tensors and a reverse-mode autodiff tape.
//!
//! Every intermediate activation of the translation model lives in a
//! [`Tensor`]. Differentiable computation is recorded on a [`Tape`]; a single
//! [`Tape::backward`] call returns the gradients of all parameter leaves.

mod dense;
mod element;
mod tape;

pub use dense::Tensor;
pub use element::Element;
pub use tape::{Gradients, Tape, Var};

use rand::SeedableRng;

/// Reproducible generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Generator for `seed`, on an independent `stream` (e.g. a step number).
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Whether stochastic layers (dropout) are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
