use std::sync::Arc;

use rand::Rng as _;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{seeded_rng, Element, Tensor};
use crate::tokenizer::PAD;

/// Affine map `x·weight + bias` with `weight` stored `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<P> {
    pub weight: P,
    pub bias: Option<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Norm<P> {
    pub weight: P,
    pub bias: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attention<P> {
    pub k_proj: Linear<P>,
    pub v_proj: Linear<P>,
    pub q_proj: Linear<P>,
    pub out_proj: Linear<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer<P> {
    pub self_attn: Attention<P>,
    pub self_attn_layer_norm: Norm<P>,
    pub fc1: Linear<P>,
    pub fc2: Linear<P>,
    pub final_layer_norm: Norm<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLayer<P> {
    pub self_attn: Attention<P>,
    pub self_attn_layer_norm: Norm<P>,
    pub encoder_attn: Attention<P>,
    pub encoder_attn_layer_norm: Norm<P>,
    pub fc1: Linear<P>,
    pub fc2: Linear<P>,
    pub final_layer_norm: Norm<P>,
}

/// Every weight of the model, generic over what sits at the leaves: stored
/// tensors ([`ModelParams`]) or their handles on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<P> {
    pub feat_proj: Linear<P>,
    pub encoder_layers: Vec<EncoderLayer<P>>,
    pub encoder_layer_norm: Norm<P>,
    pub embed_tokens: P,
    pub layernorm_embedding: Norm<P>,
    pub decoder_layers: Vec<DecoderLayer<P>>,
    pub decoder_layer_norm: Norm<P>,
    pub output_projection: P,
}

pub type ModelParams<T = f32> = Params<Arc<Tensor<T>>>;

/// Structural traversal shared by every parameter container.
trait Tree<P>: Sized {
    type Mapped<Q>;
    fn map<Q>(&self, name: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> Self::Mapped<Q>;
    fn each_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &mut P));
}

fn join(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        leaf.to_string()
    } else {
        format!("{prefix}.{leaf}")
    }
}

impl<P> Tree<P> for Linear<P> {
    type Mapped<Q> = Linear<Q>;
    fn map<Q>(&self, name: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> Linear<Q> {
        Linear {
            weight: f(&join(name, "weight"), &self.weight),
            bias: self.bias.as_ref().map(|b| f(&join(name, "bias"), b)),
        }
    }
    fn each_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &mut P)) {
        f(&join(name, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(name, "bias"), b);
        }
    }
}

impl<P> Tree<P> for Norm<P> {
    type Mapped<Q> = Norm<Q>;
    fn map<Q>(&self, name: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> Norm<Q> {
        Norm {
            weight: f(&join(name, "weight"), &self.weight),
            bias: f(&join(name, "bias"), &self.bias),
        }
    }
    fn each_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &mut P)) {
        f(&join(name, "weight"), &mut self.weight);
        f(&join(name, "bias"), &mut self.bias);
    }
}

impl<P> Tree<P> for Attention<P> {
    type Mapped<Q> = Attention<Q>;
    fn map<Q>(&self, name: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> Attention<Q> {
        Attention {
            k_proj: self.k_proj.map(&join(name, "k_proj"), f),
            v_proj: self.v_proj.map(&join(name, "v_proj"), f),
            q_proj: self.q_proj.map(&join(name, "q_proj"), f),
            out_proj: self.out_proj.map(&join(name, "out_proj"), f),
        }
    }
    fn each_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &mut P)) {
        self.k_proj.each_mut(&join(name, "k_proj"), f);
        self.v_proj.each_mut(&join(name, "v_proj"), f);
        self.q_proj.each_mut(&join(name, "q_proj"), f);
        self.out_proj.each_mut(&join(name, "out_proj"), f);
    }
}

impl<P> Tree<P> for EncoderLayer<P> {
    type Mapped<Q> = EncoderLayer<Q>;
    fn map<Q>(&self, name: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> EncoderLayer<Q> {
        EncoderLayer {
            self_attn: self.self_attn.map(&join(name, "self_attn"), f),
            self_attn_layer_norm: self.self_attn_layer_norm.map(&join(name, "self_attn_layer_norm"), f),
            fc1: self.fc1.map(&join(name, "fc1"), f),
            fc2: self.fc2.map(&join(name, "fc2"), f),
            final_layer_norm: self.final_layer_norm.map(&join(name, "final_layer_norm"), f),
        }
    }
    fn each_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &mut P)) {
        self.self_attn.each_mut(&join(name, "self_attn"), f);
        self.self_attn_layer_norm.each_mut(&join(name, "self_attn_layer_norm"), f);
        self.fc1.each_mut(&join(name, "fc1"), f);
        self.fc2.each_mut(&join(name, "fc2"), f);
        self.final_layer_norm.each_mut(&join(name, "final_layer_norm"), f);
    }
}

impl<P> Tree<P> for DecoderLayer<P> {
    type Mapped<Q> = DecoderLayer<Q>;
    fn map<Q>(&self, name: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> DecoderLayer<Q> {
        DecoderLayer {
            self_attn: self.self_attn.map(&join(name, "self_attn"), f),
            self_attn_layer_norm: self.self_attn_layer_norm.map(&join(name, "self_attn_layer_norm"), f),
            encoder_attn: self.encoder_attn.map(&join(name, "encoder_attn"), f),
            encoder_attn_layer_norm: self.encoder_attn_layer_norm.map(&join(name, "encoder_attn_layer_norm"), f),
            fc1: self.fc1.map(&join(name, "fc1"), f),
            fc2: self.fc2.map(&join(name, "fc2"), f),
            final_layer_norm: self.final_layer_norm.map(&join(name, "final_layer_norm"), f),
        }
    }
    fn each_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &mut P)) {
        self.self_attn.each_mut(&join(name, "self_attn"), f);
        self.self_attn_layer_norm.each_mut(&join(name, "self_attn_layer_norm"), f);
        self.encoder_attn.each_mut(&join(name, "encoder_attn"), f);
        self.encoder_attn_layer_norm.each_mut(&join(name, "encoder_attn_layer_norm"), f);
        self.fc1.each_mut(&join(name, "fc1"), f);
        self.fc2.each_mut(&join(name, "fc2"), f);
        self.final_layer_norm.each_mut(&join(name, "final_layer_norm"), f);
    }
}

impl<P> Params<P> {
    /// Rebuilds the tree with `f(name, leaf)` at every leaf, in a fixed order.
    pub fn map<Q>(&self, mut f: impl FnMut(&str, &P) -> Q) -> Params<Q> {
        let f: &mut dyn FnMut(&str, &P) -> Q = &mut f;
        Params {
            feat_proj: self.feat_proj.map("encoder.feat_proj", f),
            encoder_layers: self
                .encoder_layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.map(&format!("encoder.layers.{i}"), f))
                .collect(),
            encoder_layer_norm: self.encoder_layer_norm.map("encoder.layer_norm", f),
            embed_tokens: f("decoder.embed_tokens.weight", &self.embed_tokens),
            layernorm_embedding: self.layernorm_embedding.map("decoder.layernorm_embedding", f),
            decoder_layers: self
                .decoder_layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.map(&format!("decoder.layers.{i}"), f))
                .collect(),
            decoder_layer_norm: self.decoder_layer_norm.map("decoder.layer_norm", f),
            output_projection: f("decoder.output_projection.weight", &self.output_projection),
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut P)) {
        let f: &mut dyn FnMut(&str, &mut P) = &mut f;
        self.feat_proj.each_mut("encoder.feat_proj", f);
        for (i, l) in self.encoder_layers.iter_mut().enumerate() {
            l.each_mut(&format!("encoder.layers.{i}"), f);
        }
        self.encoder_layer_norm.each_mut("encoder.layer_norm", f);
        f("decoder.embed_tokens.weight", &mut self.embed_tokens);
        self.layernorm_embedding.each_mut("decoder.layernorm_embedding", f);
        for (i, l) in self.decoder_layers.iter_mut().enumerate() {
            l.each_mut(&format!("decoder.layers.{i}"), f);
        }
        self.decoder_layer_norm.each_mut("decoder.layer_norm", f);
        f("decoder.output_projection.weight", &mut self.output_projection);
    }

    pub fn for_each(&self, mut f: impl FnMut(&str, &P)) {
        self.map(|name, p| f(name, p));
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(|n, _| out.push(n.to_string()));
        out
    }
}

/// Shapes every leaf should have under `config`.
pub(crate) fn shape_tree(config: &ModelConfig) -> Params<Vec<usize>> {
    let (d, f, v) = (config.embed_dim, config.ffn_dim, config.vocab_size);
    let linear = |i: usize, o: usize, bias: bool| Linear {
        weight: vec![i, o],
        bias: bias.then(|| vec![o]),
    };
    let norm = || Norm {
        weight: vec![d],
        bias: vec![d],
    };
    let attn = || Attention {
        k_proj: linear(d, d, true),
        v_proj: linear(d, d, true),
        q_proj: linear(d, d, true),
        out_proj: linear(d, d, true),
    };
    Params {
        feat_proj: linear(config.feature_dim, d, true),
        encoder_layers: (0..config.encoder_layers)
            .map(|_| EncoderLayer {
                self_attn: attn(),
                self_attn_layer_norm: norm(),
                fc1: linear(d, f, true),
                fc2: linear(f, d, true),
                final_layer_norm: norm(),
            })
            .collect(),
        encoder_layer_norm: norm(),
        embed_tokens: vec![v, d],
        layernorm_embedding: norm(),
        decoder_layers: (0..config.decoder_layers)
            .map(|_| DecoderLayer {
                self_attn: attn(),
                self_attn_layer_norm: norm(),
                encoder_attn: attn(),
                encoder_attn_layer_norm: norm(),
                fc1: linear(d, f, true),
                fc2: linear(f, d, true),
                final_layer_norm: norm(),
            })
            .collect(),
        decoder_layer_norm: norm(),
        output_projection: vec![d, v],
    }
}

fn is_norm_gain(name: &str) -> bool {
    name.ends_with("norm.weight") || name.ends_with("layernorm_embedding.weight")
}

/// Glorot-uniform weights, zero biases, unit layer-norm gains; the padding
/// row of the token embedding is zero. Deterministic in `seed`.
pub fn init_params<T: Element>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = seeded_rng(seed, 0);
    let params = shape_tree(config).map(|name, shape| {
        let t = if shape.len() == 1 {
            if is_norm_gain(name) {
                Tensor::ones(shape.clone())
            } else {
                Tensor::zeros(shape.clone())
            }
        } else {
            let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
            let mut t = Tensor::from_fn(shape.clone(), |_| T::from_f64_lossy(rng.gen_range(-bound..bound)));
            if name == "decoder.embed_tokens.weight" {
                let d = shape[1];
                let pad = PAD as usize;
                t.data_mut()[pad * d..(pad + 1) * d].iter_mut().for_each(|x| *x = T::zero());
            }
            t
        };
        Arc::new(t)
    });
    Ok(params)
}

/// Checks that every leaf of `params` has the shape `config` implies.
pub fn check_shapes<T: Element>(config: &ModelConfig, params: &ModelParams<T>) -> Result<()> {
    let expected = shape_tree(config);
    let mut want = Vec::new();
    expected.for_each(|n, s| want.push((n.to_string(), s.clone())));
    let mut got = Vec::new();
    params.for_each(|n, t| got.push((n.to_string(), t.shape().to_vec())));
    if want.len() != got.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} parameter tensors, found {}",
            want.len(),
            got.len()
        )));
    }
    for ((wn, ws), (gn, gs)) in want.iter().zip(&got) {
        if wn != gn || ws != gs {
            return Err(Error::InvalidArgument(format!(
                "parameter `{gn}` has shape {gs:?}, expected `{wn}` {ws:?}"
            )));
        }
    }
    Ok(())
}

pub fn parameter_count<T: Element>(params: &ModelParams<T>) -> usize {
    let mut n = 0;
    params.for_each(|_, t| n += t.len());
    n
}
