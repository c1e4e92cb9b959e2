use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            other => Err(Error::config("activation", format!("unknown activation `{other}`"))),
        }
    }
}

/// Architecture hyperparameters of the encoder-decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub embed_dim: usize,
    pub ffn_dim: usize,
    pub attention_heads: usize,
    pub activation: Activation,
    /// Residual and embedding dropout.
    pub dropout: f64,
    /// Dropout on attention weights.
    pub attention_dropout: f64,
    /// Dropout after the FFN activation.
    pub activation_dropout: f64,
    pub feature_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
}

impl Default for ModelConfig {
    /// The baseline: 6 encoder / 3 decoder layers, d = 256, FFN 1024, 4 heads.
    fn default() -> Self {
        ModelConfig {
            encoder_layers: 6,
            decoder_layers: 3,
            embed_dim: 256,
            ffn_dim: 1024,
            attention_heads: 4,
            activation: Activation::Relu,
            dropout: 0.3,
            attention_dropout: 0.0,
            activation_dropout: 0.0,
            feature_dim: 1024,
            vocab_size: 7000,
            max_positions: 1024,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("embed_dim", self.embed_dim),
            ("ffn_dim", self.ffn_dim),
            ("attention_heads", self.attention_heads),
            ("feature_dim", self.feature_dim),
            ("max_positions", self.max_positions),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.vocab_size <= 4 {
            return Err(Error::config("vocab_size", "must exceed the 4 special ids"));
        }
        if !self.embed_dim.is_multiple_of(self.attention_heads) {
            return Err(Error::config(
                "attention_heads",
                format!(
                    "embed_dim {} is not divisible by {} heads",
                    self.embed_dim, self.attention_heads
                ),
            ));
        }
        if !self.embed_dim.is_multiple_of(2) {
            return Err(Error::config("embed_dim", "must be even for sinusoidal positions"));
        }
        for (name, p) in [
            ("dropout", self.dropout),
            ("attention_dropout", self.attention_dropout),
            ("activation_dropout", self.activation_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config(name, format!("{p} not in [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.attention_heads
    }

    /// Closed-form number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let (d, f, v) = (self.embed_dim, self.ffn_dim, self.vocab_size);
        let linear = |i: usize, o: usize| i * o + o;
        let norm = 2 * d;
        let attn = 4 * linear(d, d);
        let ffn = linear(d, f) + linear(f, d);
        let enc_layer = attn + ffn + 2 * norm;
        let dec_layer = 2 * attn + ffn + 3 * norm;
        linear(self.feature_dim, d)
            + self.encoder_layers * enc_layer
            + norm
            + v * d
            + norm
            + self.decoder_layers * dec_layer
            + norm
            + d * v
    }

    /// `key=value` lines, the form stored in checkpoints.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("encoder_layers".into(), self.encoder_layers.to_string()),
            ("decoder_layers".into(), self.decoder_layers.to_string()),
            ("embed_dim".into(), self.embed_dim.to_string()),
            ("ffn_dim".into(), self.ffn_dim.to_string()),
            ("attention_heads".into(), self.attention_heads.to_string()),
            ("activation".into(), self.activation.to_string()),
            ("dropout".into(), self.dropout.to_string()),
            ("attention_dropout".into(), self.attention_dropout.to_string()),
            ("activation_dropout".into(), self.activation_dropout.to_string()),
            ("feature_dim".into(), self.feature_dim.to_string()),
            ("vocab_size".into(), self.vocab_size.to_string()),
            ("max_positions".into(), self.max_positions.to_string()),
        ]
    }

    /// Applies one `key=value` setting. Returns `Ok(false)` for keys that are
    /// not model fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
        }
        match key {
            "encoder_layers" => self.encoder_layers = parse(key, value)?,
            "decoder_layers" => self.decoder_layers = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "ffn_dim" => self.ffn_dim = parse(key, value)?,
            "attention_heads" => self.attention_heads = parse(key, value)?,
            "activation" => self.activation = value.trim().parse()?,
            "dropout" => self.dropout = parse(key, value)?,
            "attention_dropout" => self.attention_dropout = parse(key, value)?,
            "activation_dropout" => self.activation_dropout = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "max_positions" => self.max_positions = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
