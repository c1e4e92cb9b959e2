use rayon::prelude::*;

use super::{beam_search, greedy, DecodeConfig, Hypothesis, StepModel};
use crate::data::FeatureSequence;
use crate::error::{Error, Result};
use crate::model::{EncoderMemory, Model};
use crate::tensor::{seeded_rng, Element, Mode, Tape, Tensor};

/// A model with one source sentence already encoded. Every step re-runs
/// the decoder over the full prefixes; nothing is cached between steps.
pub struct EncodedSource<'a, T: Element> {
    model: &'a Model<T>,
    /// `[len, d]`
    states: Tensor<T>,
    len: usize,
}

impl<'a, T: Element> EncodedSource<'a, T> {
    pub fn new(model: &'a Model<T>, features: &FeatureSequence) -> Result<Self> {
        let cfg = &model.config;
        if features.dim() != cfg.feature_dim {
            return Err(Error::InvalidArgument(format!(
                "features have dim {}, model expects {}",
                features.dim(),
                cfg.feature_dim
            )));
        }
        let len = features.frames();
        let tape = Tape::new();
        let fwd = model.bind(&tape, false, Mode::Eval);
        let x: Tensor<T> = features.as_tensor().cast().reshape([1, len, cfg.feature_dim])?;
        let mut rng = seeded_rng(0, 0);
        let mem = fwd.encode(&x, &[len], &mut rng)?;
        let states = tape.value(mem.states).clone().reshape([len, cfg.embed_dim])?;
        Ok(EncodedSource { model, states, len })
    }

    pub fn frames(&self) -> usize {
        self.len
    }
}

impl<T: Element> StepModel for EncodedSource<'_, T> {
    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn next_log_probs(&self, prefixes: &[u32], n: usize) -> Result<Vec<f64>> {
        let d = self.model.config.embed_dim;
        let v = self.model.config.vocab_size;
        let len = prefixes.len() / n;
        let tape = Tape::new();
        let fwd = self.model.bind(&tape, false, Mode::Eval);
        let mut expanded = Vec::with_capacity(n * self.len * d);
        for _ in 0..n {
            expanded.extend_from_slice(self.states.data());
        }
        let memory = EncoderMemory {
            states: tape.constant(Tensor::new([n, self.len, d], expanded)?),
            key_padding: vec![false; n * self.len],
            batch: n,
            len: self.len,
        };
        let mut rng = seeded_rng(0, 0);
        let logp = fwd.decode(prefixes, n, Some(&memory), &mut rng)?;
        let lp = tape.value(logp);
        let mut out = Vec::with_capacity(n * v);
        for row in 0..n {
            let at = (row * len + len - 1) * v;
            out.extend(lp.data()[at..at + v].iter().map(|x| x.as_f64()));
        }
        Ok(out)
    }
}

/// Beam-decodes one feature sequence.
pub fn translate<T: Element>(model: &Model<T>, features: &FeatureSequence, cfg: &DecodeConfig) -> Result<Hypothesis> {
    cfg.validate()?;
    let src = EncodedSource::new(model, features)?;
    beam_search(&src, cfg.beam_size, cfg.max_len_for(features.frames()), cfg.length_penalty)
}

pub fn translate_greedy<T: Element>(
    model: &Model<T>,
    features: &FeatureSequence,
    cfg: &DecodeConfig,
) -> Result<Hypothesis> {
    cfg.validate()?;
    let src = EncodedSource::new(model, features)?;
    greedy(&src, cfg.max_len_for(features.frames()), cfg.length_penalty)
}

/// Decodes many sequences in parallel; output order follows the input.
pub fn translate_all<T: Element>(
    model: &Model<T>,
    inputs: &[&FeatureSequence],
    cfg: &DecodeConfig,
    use_greedy: bool,
) -> Result<Vec<Hypothesis>> {
    inputs
        .par_iter()
        .map(|f| {
            if use_greedy {
                translate_greedy(model, f, cfg)
            } else {
                translate(model, f, cfg)
            }
        })
        .collect()
}
