use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tokenizer::{BOS, EOS, PAD};

/// Anything that scores the next token of a batch of equal-length prefixes.
pub trait StepModel {
    fn vocab_size(&self) -> usize;

    /// `prefixes` is row-major `[n, len]`, each row starting with `<s>`.
    /// Returns row-major `[n, vocab_size]` log-probabilities.
    fn next_log_probs(&self, prefixes: &[u32], n: usize) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Cap on generated tokens (including `</s>`). `None` derives it from
    /// the source length, see [`DecodeConfig::max_len_for`].
    pub max_len: Option<usize>,
    pub length_penalty: f64,
    /// Source frames per output token used by the derived length cap.
    pub feature_stride: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 5,
            max_len: None,
            length_penalty: 1.0,
            feature_stride: 1,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::config("beam", "must be at least 1"));
        }
        if self.max_len == Some(0) {
            return Err(Error::config("max_len", "must be at least 1"));
        }
        if self.feature_stride == 0 {
            return Err(Error::config("feature_stride", "must be positive"));
        }
        if !self.length_penalty.is_finite() {
            return Err(Error::config("length_penalty", "must be finite"));
        }
        Ok(())
    }

    /// `max_len`, or `2·frames/stride + 10` capped at 200.
    pub fn max_len_for(&self, frames: usize) -> usize {
        self.max_len
            .unwrap_or_else(|| (2 * frames / self.feature_stride + 10).min(200))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Starts with `<s>`; ends with `</s>` when finished.
    pub tokens: Vec<u32>,
    pub logprob: f64,
    pub finished: bool,
    /// `logprob / length^α`, length counting generated tokens.
    pub score: f64,
}

impl Hypothesis {
    fn new(tokens: Vec<u32>, logprob: f64, finished: bool, alpha: f64) -> Self {
        let len = (tokens.len() - 1).max(1) as f64;
        Hypothesis {
            score: logprob / len.powf(alpha),
            tokens,
            logprob,
            finished,
        }
    }

    /// Generated tokens without `<s>` and `</s>`.
    pub fn output(&self) -> &[u32] {
        let end = if self.finished { self.tokens.len() - 1 } else { self.tokens.len() };
        &self.tokens[1..end]
    }
}

/// Best first: higher score, then lower token ids, then shorter.
fn rank_final(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

fn check_row(row: &[f64], vocab: usize) -> Result<()> {
    if row.len() != vocab {
        return Err(Error::InvalidArgument(format!(
            "step model returned {} scores for a vocabulary of {vocab}",
            row.len()
        )));
    }
    Ok(())
}

/// Beam search with finished-hypothesis banking, monotone in the width.
///
/// One pass at width `w` expands every live hypothesis over the vocabulary
/// (never proposing `<s>` or `<pad>`) and ranks candidates by cumulative
/// log-probability, breaking ties by lower token id and then lower parent
/// rank. `</s>` candidates ranked within the top `w` are banked; the best
/// other candidates refill the beam. A pass stops once `w` hypotheses are
/// banked or after `max_len` tokens, when the live beam is finished as is.
///
/// A single pass is not monotone: widening the beam can prune the path a
/// narrower beam kept, and can even lose to greedy decoding. So the result
/// is the best hypothesis over passes of every width `1..=beam_size`, ranked
/// by `logprob / length^α`. When the full-width pass never discards a
/// candidate it has enumerated every sequence, and the narrower passes are
/// skipped. Width 1 is exactly [`greedy`].
pub fn beam_search(model: &impl StepModel, beam_size: usize, max_len: usize, alpha: f64) -> Result<Hypothesis> {
    if beam_size == 0 || max_len == 0 {
        return Err(Error::InvalidArgument("beam size and max_len must be positive".into()));
    }
    let (mut finals, exhaustive) = beam_pass(model, beam_size, max_len, alpha)?;
    if !exhaustive {
        for w in 1..beam_size {
            finals.extend(beam_pass(model, w, max_len, alpha)?.0);
        }
    }
    finals.sort_by(rank_final);
    finals
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidArgument("step model assigns -inf to every token".into()))
}

/// One fixed-width pass. Also reports whether nothing was ever discarded.
fn beam_pass(model: &impl StepModel, width: usize, max_len: usize, alpha: f64) -> Result<(Vec<Hypothesis>, bool)> {
    let vocab = model.vocab_size();
    let mut live: Vec<(Vec<u32>, f64)> = vec![(vec![BOS], 0.0)];
    let mut banked: Vec<Hypothesis> = Vec::new();
    let mut exhaustive = true;

    for step in 0..max_len {
        let n = live.len();
        let prefixes: Vec<u32> = live.iter().flat_map(|(t, _)| t.iter().copied()).collect();
        let lp = model.next_log_probs(&prefixes, n)?;
        if lp.len() != n * vocab {
            return Err(Error::InvalidArgument(format!(
                "step model returned {} scores for {n} prefixes",
                lp.len()
            )));
        }
        let mut cands: Vec<(f64, u32, usize)> = Vec::with_capacity(n * vocab);
        for (parent, (_, cum)) in live.iter().enumerate() {
            let row = &lp[parent * vocab..(parent + 1) * vocab];
            check_row(row, vocab)?;
            for (tok, &l) in row.iter().enumerate() {
                let tok = tok as u32;
                if tok == BOS || tok == PAD || l == f64::NEG_INFINITY {
                    continue;
                }
                cands.push((cum + l, tok, parent));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut next: Vec<(Vec<u32>, f64)> = Vec::with_capacity(width);
        for (rank, &(score, tok, parent)) in cands.iter().enumerate() {
            if rank >= width && next.len() >= width {
                exhaustive = false;
                break;
            }
            let mut tokens = live[parent].0.clone();
            tokens.push(tok);
            if tok == EOS {
                if rank < width {
                    banked.push(Hypothesis::new(tokens, score, true, alpha));
                } else {
                    exhaustive = false;
                }
            } else if next.len() < width {
                next.push((tokens, score));
            } else {
                exhaustive = false;
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
        if banked.len() >= width {
            exhaustive = false;
            break;
        }
        if step + 1 == max_len {
            banked.extend(live.drain(..).map(|(t, s)| Hypothesis::new(t, s, false, alpha)));
        }
    }
    Ok((banked, exhaustive))
}

/// Picks the most probable token at every step until `</s>` or `max_len`.
pub fn greedy(model: &impl StepModel, max_len: usize, alpha: f64) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be positive".into()));
    }
    let vocab = model.vocab_size();
    let mut tokens = vec![BOS];
    let mut cum = 0.0;
    for _ in 0..max_len {
        let lp = model.next_log_probs(&tokens, 1)?;
        check_row(&lp, vocab)?;
        let mut best: Option<(f64, u32)> = None;
        for (tok, &l) in lp.iter().enumerate() {
            let tok = tok as u32;
            if tok == BOS || tok == PAD || l == f64::NEG_INFINITY {
                continue;
            }
            let s = cum + l;
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, tok));
            }
        }
        let Some((s, tok)) = best else {
            return Err(Error::InvalidArgument("step model assigns -inf to every token".into()));
        };
        cum = s;
        tokens.push(tok);
        if tok == EOS {
            return Ok(Hypothesis::new(tokens, cum, true, alpha));
        }
    }
    Ok(Hypothesis::new(tokens, cum, false, alpha))
}
