//! Subword vocabulary (byte-pair encoding over lowercased words) and the
//! truecasing model used to restore capitalization after decoding.

mod truecase;
mod vocab;

pub use truecase::{truecase, CasingModel};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK, WORD_START};
