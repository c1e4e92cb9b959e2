//! Corpus BLEU, reduced BLEU (rBLEU) and split evaluation.
//!
//! rBLEU deletes a list of low-content words from hypotheses and references
//! before scoring, so that matching filler words cannot inflate the score.

mod bleu;
mod evaluate;
mod rbleu;

pub use bleu::{
    bleu_from_tokens, corpus_bleu, corpus_bleu_multi, corpus_bleu_with, tokenize_for_scoring, BleuConfig,
    BleuReport, MAX_ORDER,
};
pub use evaluate::{
    evaluate_dataset, evaluate_references, evaluate_split, postprocess, ScoreRow, SplitEvaluation,
};
pub use rbleu::{rbleu, rbleu_with, ExclusionList};
