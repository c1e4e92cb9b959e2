use std::sync::Arc;

use super::params::{check_shapes, init_params, Attention, Linear, ModelParams, Norm, Params};
use super::{Activation, ModelConfig, SinusoidalTable};
use crate::error::{Error, Result};
use crate::tensor::{Element, Mode, Rng, Tape, Tensor, Var};
use crate::tokenizer::PAD;

const LN_EPS: f64 = 1e-5;

/// Configuration, weights and position table of one encoder-decoder.
#[derive(Clone, Debug)]
pub struct Model<T: Element = f32> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
    positions: SinusoidalTable<T>,
}

/// Encoder output as seen by the decoder's cross-attention.
#[derive(Clone, Debug)]
pub struct EncoderMemory {
    /// `[batch, len, d]`
    pub states: Var,
    /// `batch × len`, true where the source frame is padding.
    pub key_padding: Vec<bool>,
    pub batch: usize,
    pub len: usize,
}

impl<T: Element> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        check_shapes(&config, &params)?;
        let positions = SinusoidalTable::new(config.max_positions, config.embed_dim);
        Ok(Model {
            config,
            params,
            positions,
        })
    }

    pub fn cast<U: Element>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.map(|_, t| Arc::new(t.cast())),
            positions: SinusoidalTable::new(self.config.max_positions, self.config.embed_dim),
        }
    }

    pub fn positions(&self) -> &SinusoidalTable<T> {
        &self.positions
    }

    /// Places the weights on `tape`. With `trainable`, they become gradient
    /// leaves; otherwise constants.
    pub fn bind<'a>(&'a self, tape: &'a Tape<T>, trainable: bool, mode: Mode) -> Forward<'a, T> {
        let vars = self.params.map(|_, t| {
            if trainable {
                tape.param_shared(Arc::clone(t))
            } else {
                tape.constant_shared(Arc::clone(t))
            }
        });
        Forward {
            model: self,
            tape,
            vars,
            mode,
        }
    }
}

/// A model bound to a tape; runs the encoder and decoder.
pub struct Forward<'a, T: Element> {
    pub model: &'a Model<T>,
    pub tape: &'a Tape<T>,
    pub vars: Params<Var>,
    pub mode: Mode,
}

/// Additive attention mask `[batch·heads, tq, tk]`: 0 where allowed, -inf
/// where the key is padding or (with `causal`) lies in the future.
pub fn attention_mask<T: Element>(
    batch: usize,
    heads: usize,
    tq: usize,
    tk: usize,
    key_padding: &[bool],
    causal: bool,
) -> Tensor<T> {
    let mut data = Vec::with_capacity(batch * heads * tq * tk);
    for b in 0..batch {
        let mut block = Vec::with_capacity(tq * tk);
        for q in 0..tq {
            for k in 0..tk {
                let blocked = key_padding[b * tk + k] || (causal && k > q);
                block.push(if blocked { T::neg_infinity() } else { T::zero() });
            }
        }
        for _ in 0..heads {
            data.extend_from_slice(&block);
        }
    }
    Tensor::new([batch * heads, tq, tk], data).expect("mask shape")
}

impl<T: Element> Forward<'_, T> {
    fn cfg(&self) -> &ModelConfig {
        &self.model.config
    }

    fn linear(&self, p: &Linear<Var>, x: Var) -> Result<Var> {
        let y = self.tape.matmul(x, p.weight)?;
        match p.bias {
            Some(b) => self.tape.add_bias(y, b),
            None => Ok(y),
        }
    }

    fn norm(&self, p: &Norm<Var>, x: Var) -> Result<Var> {
        self.tape.layer_norm(x, p.weight, p.bias, LN_EPS)
    }

    fn dropout(&self, x: Var, p: f64, rng: &mut Rng) -> Result<Var> {
        self.tape.dropout(x, p, self.mode, rng)
    }

    fn split_heads(&self, x: Var, batch: usize, len: usize) -> Result<Var> {
        let h = self.cfg().attention_heads;
        let dh = self.cfg().head_dim();
        let x = self.tape.reshape(x, [batch, len, h, dh])?;
        let x = self.tape.swap_axes12(x)?;
        self.tape.reshape(x, [batch * h, len, dh])
    }

    /// Multi-head scaled dot-product attention of `query [B, tq, d]` over
    /// `memory [B, tk, d]` with an additive `mask`.
    pub fn attention(
        &self,
        p: &Attention<Var>,
        query: Var,
        memory: Var,
        mask: &Tensor<T>,
        rng: &mut Rng,
    ) -> Result<Var> {
        let tape = self.tape;
        let qs = tape.shape(query);
        let ks = tape.shape(memory);
        let (batch, tq, d) = (qs[0], qs[1], qs[2]);
        let tk = ks[1];
        let h = self.cfg().attention_heads;
        let dh = self.cfg().head_dim();

        let q = self.split_heads(self.linear(&p.q_proj, query)?, batch, tq)?;
        let k = self.split_heads(self.linear(&p.k_proj, memory)?, batch, tk)?;
        let v = self.split_heads(self.linear(&p.v_proj, memory)?, batch, tk)?;

        let scores = tape.bmm(q, k, true)?;
        let scores = tape.scale(scores, T::from_f64_lossy(1.0 / (dh as f64).sqrt()));
        let scores = tape.add_const(scores, mask)?;
        let weights = tape.softmax(scores);
        let weights = self.dropout(weights, self.cfg().attention_dropout, rng)?;

        let ctx = tape.bmm(weights, v, false)?;
        let ctx = tape.reshape(ctx, [batch, h, tq, dh])?;
        let ctx = tape.swap_axes12(ctx)?;
        let ctx = tape.reshape(ctx, [batch, tq, d])?;
        self.linear(&p.out_proj, ctx)
    }

    fn ffn(&self, fc1: &Linear<Var>, fc2: &Linear<Var>, x: Var, rng: &mut Rng) -> Result<Var> {
        let h = self.linear(fc1, x)?;
        let h = match self.cfg().activation {
            Activation::Relu => self.tape.relu(h),
            Activation::Gelu => self.tape.gelu(h),
        };
        let h = self.dropout(h, self.cfg().activation_dropout, rng)?;
        self.linear(fc2, h)
    }

    fn residual(&self, x: Var, branch: Var, rng: &mut Rng) -> Result<Var> {
        let branch = self.dropout(branch, self.cfg().dropout, rng)?;
        self.tape.add(x, branch)
    }

    /// Position rows for a padded batch: positions count from 1 over
    /// non-padding entries; padding gets the zero row.
    fn position_block(&self, batch: usize, len: usize, is_pad: impl Fn(usize, usize) -> bool) -> Result<Tensor<T>> {
        let d = self.cfg().embed_dim;
        let mut data = vec![T::zero(); batch * len * d];
        for b in 0..batch {
            let mut pos = 0;
            for t in 0..len {
                if is_pad(b, t) {
                    continue;
                }
                pos += 1;
                if pos > self.model.positions.max_positions() {
                    return Err(Error::InvalidArgument(format!(
                        "sequence length exceeds max_positions {}",
                        self.model.positions.max_positions()
                    )));
                }
                let at = (b * len + t) * d;
                data[at..at + d].copy_from_slice(self.model.positions.row(pos));
            }
        }
        Tensor::new([batch, len, d], data)
    }

    /// Runs the encoder on padded features `[B, T, feature_dim]`; frames at or
    /// beyond `lengths[b]` are padding.
    pub fn encode(&self, features: &Tensor<T>, lengths: &[usize], rng: &mut Rng) -> Result<EncoderMemory> {
        let cfg = self.cfg();
        let s = features.shape();
        if s.len() != 3 || s[2] != cfg.feature_dim {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: s.to_vec(),
                right: vec![0, 0, cfg.feature_dim],
            });
        }
        let (batch, len) = (s[0], s[1]);
        if lengths.len() != batch {
            return Err(Error::InvalidArgument(format!(
                "{} lengths for a batch of {batch}",
                lengths.len()
            )));
        }
        if let Some(&bad) = lengths.iter().find(|&&l| l > len || l == 0) {
            return Err(Error::InvalidArgument(format!("source length {bad} outside 1..={len}")));
        }
        if len > cfg.max_positions {
            return Err(Error::InvalidArgument(format!(
                "{len} frames exceed max_positions {}",
                cfg.max_positions
            )));
        }
        let key_padding: Vec<bool> = (0..batch * len).map(|i| i % len >= lengths[i / len]).collect();

        let tape = self.tape;
        let v = &self.vars;
        let x = tape.constant(features.clone());
        let x = self.linear(&v.feat_proj, x)?;
        let pos = self.position_block(batch, len, |b, t| key_padding[b * len + t])?;
        let x = tape.add_const(x, &pos)?;
        let mut x = self.dropout(x, cfg.dropout, rng)?;

        let mask = attention_mask(batch, cfg.attention_heads, len, len, &key_padding, false);
        for layer in &v.encoder_layers {
            let h = self.norm(&layer.self_attn_layer_norm, x)?;
            let h = self.attention(&layer.self_attn, h, h, &mask, rng)?;
            x = self.residual(x, h, rng)?;
            let h = self.norm(&layer.final_layer_norm, x)?;
            let h = self.ffn(&layer.fc1, &layer.fc2, h, rng)?;
            x = self.residual(x, h, rng)?;
        }
        let states = self.norm(&v.encoder_layer_norm, x)?;
        Ok(EncoderMemory {
            states,
            key_padding,
            batch,
            len,
        })
    }

    /// Runs the decoder on `prev` (row-major `[batch, len]`, padded with the
    /// pad id) and returns log-probabilities `[batch, len, vocab]`. Without
    /// `memory` the cross-attention sublayers are skipped.
    pub fn decode(&self, prev: &[u32], batch: usize, memory: Option<&EncoderMemory>, rng: &mut Rng) -> Result<Var> {
        let cfg = self.cfg();
        if batch == 0 || !prev.len().is_multiple_of(batch) {
            return Err(Error::InvalidArgument(format!(
                "{} target ids do not split into {batch} rows",
                prev.len()
            )));
        }
        let len = prev.len() / batch;
        if let Some(m) = memory {
            if m.batch != batch {
                return Err(Error::InvalidArgument(format!(
                    "encoder batch {} vs decoder batch {batch}",
                    m.batch
                )));
            }
        }
        let ids: Vec<usize> = prev.iter().map(|&i| i as usize).collect();
        if let Some(&bad) = ids.iter().find(|&&i| i >= cfg.vocab_size) {
            return Err(Error::IdOutOfRange {
                id: bad,
                size: cfg.vocab_size,
            });
        }
        let key_padding: Vec<bool> = ids.iter().map(|&i| i == PAD as usize).collect();

        let tape = self.tape;
        let v = &self.vars;
        let x = tape.embedding(v.embed_tokens, &ids, Some(PAD as usize))?;
        let x = tape.reshape(x, [batch, len, cfg.embed_dim])?;
        let x = tape.scale(x, T::from_f64_lossy((cfg.embed_dim as f64).sqrt()));
        let pos = self.position_block(batch, len, |b, t| key_padding[b * len + t])?;
        let x = tape.add_const(x, &pos)?;
        let x = self.norm(&v.layernorm_embedding, x)?;
        let mut x = self.dropout(x, cfg.dropout, rng)?;

        let self_mask = attention_mask(batch, cfg.attention_heads, len, len, &key_padding, true);
        let cross_mask =
            memory.map(|m| attention_mask(batch, cfg.attention_heads, len, m.len, &m.key_padding, false));
        for layer in &v.decoder_layers {
            let h = self.norm(&layer.self_attn_layer_norm, x)?;
            let h = self.attention(&layer.self_attn, h, h, &self_mask, rng)?;
            x = self.residual(x, h, rng)?;
            if let (Some(m), Some(mask)) = (memory, &cross_mask) {
                let h = self.norm(&layer.encoder_attn_layer_norm, x)?;
                let h = self.attention(&layer.encoder_attn, h, m.states, mask, rng)?;
                x = self.residual(x, h, rng)?;
            }
            let h = self.norm(&layer.final_layer_norm, x)?;
            let h = self.ffn(&layer.fc1, &layer.fc2, h, rng)?;
            x = self.residual(x, h, rng)?;
        }
        let x = self.norm(&v.decoder_layer_norm, x)?;
        let logits = tape.matmul(x, v.output_projection)?;
        Ok(tape.log_softmax(logits))
    }
}
