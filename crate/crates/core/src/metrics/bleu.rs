use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Lowercases and splits on whitespace; every character that is neither
/// alphanumeric nor whitespace becomes a token of its own.
pub fn tokenize_for_scoring(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BleuConfig {
    /// Add-one smoothing of the 2- to 4-gram precisions.
    pub smooth: bool,
}

/// Corpus-level BLEU statistics. Scores are cumulative and on a 0 to 100
/// scale; `bleu[k - 1]` is BLEU-k.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuReport {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    /// Candidate length `c`.
    pub hyp_len: usize,
    /// Effective reference length `r`.
    pub ref_len: usize,
    pub bleu: [f64; MAX_ORDER],
    /// Set when the corpus is empty after tokenization and the zero report
    /// was returned instead of a score.
    pub warning: Option<String>,
}

impl BleuReport {
    /// BLEU-4.
    pub fn score(&self) -> f64 {
        self.bleu[MAX_ORDER - 1]
    }

    fn degenerate(hyp_len: usize, ref_len: usize, why: &str) -> Self {
        BleuReport {
            hyp_len,
            ref_len,
            warning: Some(why.to_string()),
            ..BleuReport::default()
        }
    }
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BLEU = {:.2} {:.1}/{:.1}/{:.1}/{:.1} (BP = {:.3}, c = {}, r = {})",
            self.score(),
            100.0 * self.precisions[0],
            100.0 * self.precisions[1],
            100.0 * self.precisions[2],
            100.0 * self.precisions[3],
            self.brevity_penalty,
            self.hyp_len,
            self.ref_len
        )
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Length of the reference closest to `c`; ties go to the shorter one.
fn closest_ref_len(c: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap_or(0)
}

/// BLEU over pre-tokenized sentences, each hypothesis with one or more
/// references. Clipping uses the maximum count over references.
pub fn bleu_from_tokens(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>], cfg: BleuConfig) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::CountMismatch {
            hyp: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rs) in hyps.iter().zip(refs) {
        c += h.len();
        r += closest_ref_len(h.len(), rs);
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(h, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for rf in rs {
                for (g, k) in ngram_counts(rf, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in hc {
                matches[n - 1] += k.min(max_ref.get(g).copied().unwrap_or(0));
            }
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if c == 0 {
        return Ok(BleuReport::degenerate(c, r, "all hypotheses are empty"));
    }
    if r == 0 {
        return Ok(BleuReport::degenerate(c, r, "all references are empty"));
    }

    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        precisions[n] = if cfg.smooth && n > 0 {
            (matches[n] + 1) as f64 / (totals[n] + 1) as f64
        } else if totals[n] == 0 {
            0.0
        } else {
            matches[n] as f64 / totals[n] as f64
        };
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    let mut bleu = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    let mut any_zero = false;
    for k in 1..=MAX_ORDER {
        let p = precisions[k - 1];
        if p == 0.0 {
            any_zero = true;
        } else {
            log_sum += p.ln();
        }
        bleu[k - 1] = if any_zero {
            0.0
        } else {
            100.0 * bp * (log_sum / k as f64).exp()
        };
    }
    Ok(BleuReport {
        matches,
        totals,
        precisions,
        brevity_penalty: bp,
        hyp_len: c,
        ref_len: r,
        bleu,
        warning: None,
    })
}

/// Corpus BLEU with one reference per hypothesis.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<BleuReport> {
    corpus_bleu_with(hyps, refs, BleuConfig::default())
}

pub fn corpus_bleu_with<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], cfg: BleuConfig) -> Result<BleuReport> {
    let h: Vec<Vec<String>> = hyps.iter().map(|s| tokenize_for_scoring(s.as_ref())).collect();
    let r: Vec<Vec<Vec<String>>> = refs.iter().map(|s| vec![tokenize_for_scoring(s.as_ref())]).collect();
    bleu_from_tokens(&h, &r, cfg)
}

/// Corpus BLEU with any number of references per hypothesis; the effective
/// reference length picks the reference closest in length.
pub fn corpus_bleu_multi<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[Vec<R>],
    cfg: BleuConfig,
) -> Result<BleuReport> {
    let h: Vec<Vec<String>> = hyps.iter().map(|s| tokenize_for_scoring(s.as_ref())).collect();
    let r: Vec<Vec<Vec<String>>> = refs
        .iter()
        .map(|rs| rs.iter().map(|s| tokenize_for_scoring(s.as_ref())).collect())
        .collect();
    bleu_from_tokens(&h, &r, cfg)
}
