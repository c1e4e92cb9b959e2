//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use slt_core::data::{Dataset, Example, SynthConfig, SynthItem, SynthLanguage};
use slt_core::decode::StepModel;
use slt_core::model::{Activation, Model, ModelConfig, Params};
use slt_core::tensor::{seeded_rng, Mode, Tape, Tensor, Var};
use slt_core::tokenizer::{Vocabulary, BOS, EOS, PAD};
use slt_core::{optim, Result};

// ------------------------------------------------------------ gradient checks

/// Finite-difference step.
pub const H: f64 = 1e-4;
/// Largest accepted relative error between analytic and numeric gradients.
pub const GRAD_TOL: f64 = 1e-4;
/// Denominator floor so that gradients near zero are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn randn(shape: &[usize], rng: &mut impl rand::Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| StandardNormal.sample(rng))
}

/// Random values kept at least `gap` away from zero (keeps ReLU kinks out of
/// the finite-difference stencil).
pub fn randn_away_from_zero(shape: &[usize], gap: f64, rng: &mut impl rand::Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let x: f64 = StandardNormal.sample(rng);
        x.signum() * (x.abs() + gap)
    })
}

/// Reduces `out` to a scalar with fixed random weights, so every output
/// element contributes to the checked gradient with a distinct coefficient.
pub fn project(tape: &Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(out);
    let mut rng = seeded_rng(seed, 999);
    let w = tape.constant(randn(&shape, &mut rng));
    let y = tape.mul(out, w)?;
    Ok(tape.sum(y))
}

/// Largest relative error over every element of every input, comparing the
/// tape's gradient to a central difference of `f`.
/// A scalar function of tape inputs.
pub type Objective<'a> = dyn Fn(&Tape<f64>, &[Var]) -> Result<Var> + 'a;

pub fn check_gradients(inputs: &[Tensor<f64>], f: &Objective) -> f64 {
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&tape, &vars).expect("forward");
    let grads = tape.backward(loss).expect("backward");
    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let l = f(&tape, &vars).expect("forward");
        let v = tape.value(l).item();
        v
    };
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].shape().to_vec()));
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    worst
}

/// The full architecture shrunk for gradient checks: d = 8, one layer on
/// each side, 11 output tokens.
pub fn shrunk_config() -> ModelConfig {
    ModelConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        embed_dim: 8,
        ffn_dim: 16,
        attention_heads: 2,
        activation: Activation::Gelu,
        dropout: 0.1,
        attention_dropout: 0.1,
        activation_dropout: 0.1,
        feature_dim: 6,
        vocab_size: 11,
        max_positions: 64,
    }
}

/// Features, lengths, decoder input and targets for a 2-item batch with
/// padding on both sides.
pub struct ToyBatch {
    pub features: Tensor<f64>,
    pub src_lengths: Vec<usize>,
    pub prev: Vec<u32>,
    pub targets: Vec<u32>,
}

pub fn toy_batch(cfg: &ModelConfig, seed: u64) -> ToyBatch {
    let mut rng = seeded_rng(seed, 7);
    let (b, t) = (2, 5);
    let mut features = randn(&[b, t, cfg.feature_dim], &mut rng);
    // second item has 3 frames; its padding is zero
    for f in 3..t {
        for k in 0..cfg.feature_dim {
            features.data_mut()[(t + f) * cfg.feature_dim + k] = 0.0;
        }
    }
    let v = cfg.vocab_size as u32;
    let mut tok = || rng.gen_range(4..v);
    let prev = vec![BOS, tok(), tok(), tok(), BOS, tok(), PAD, PAD];
    let targets = vec![tok(), tok(), tok(), EOS, tok(), EOS, PAD, PAD];
    ToyBatch {
        features,
        src_lengths: vec![5, 3],
        prev,
        targets,
    }
}

/// Label-smoothed loss of `model` on `batch`, with dropout masks drawn from
/// a generator fixed by `seed`. Also returns the parameter handles.
pub fn model_loss(model: &Model<f64>, tape: &Tape<f64>, batch: &ToyBatch, seed: u64) -> Result<(Var, Params<Var>)> {
    let fwd = model.bind(tape, true, Mode::Train);
    let mut rng = seeded_rng(seed, 3);
    let mem = fwd.encode(&batch.features, &batch.src_lengths, &mut rng)?;
    let logp = fwd.decode(&batch.prev, 2, Some(&mem), &mut rng)?;
    let (loss, _) = optim::smoothed_ce(tape, logp, &batch.targets, &optim::LossConfig::default())?;
    Ok((loss, fwd.vars))
}

/// Gradient check of every parameter of a freshly initialized shrunk model.
/// Returns the worst relative error and the entry it occurred at.
pub fn check_model_gradients(seed: u64) -> (f64, String) {
    let cfg = shrunk_config();
    let model: Model<f64> = Model::new(cfg.clone(), seed).unwrap();
    let batch = toy_batch(&cfg, seed);

    let tape = Tape::new();
    let (loss, vars) = model_loss(&model, &tape, &batch, seed).unwrap();
    let grads = tape.backward(loss).unwrap();
    let mut handles = Vec::new();
    vars.for_each(|name, v| handles.push((name.to_string(), *v)));

    let loss_of = |m: &Model<f64>| -> f64 {
        let tape = Tape::new();
        let (l, _) = model_loss(m, &tape, &batch, seed).unwrap();
        let v = tape.value(l).item();
        v
    };
    let mut worst = (0.0f64, String::new());
    for (name, var) in &handles {
        let mut len = 0;
        model.params.for_each(|n, t| {
            if n == name {
                len = t.len();
            }
        });
        for j in 0..len {
            let perturbed = |delta: f64| {
                let mut m = model.clone();
                m.params.for_each_mut(|n, t| {
                    if n == name {
                        std::sync::Arc::make_mut(t).data_mut()[j] += delta;
                    }
                });
                loss_of(&m)
            };
            let numeric = (perturbed(H) - perturbed(-H)) / (2.0 * H);
            let analytic = grads.get(*var).map_or(0.0, |g| g.data()[j]);
            let e = rel_err(analytic, numeric);
            if e > worst.0 {
                worst = (e, format!("{name}[{j}]"));
            }
        }
    }
    worst
}

// ------------------------------------------------------------- BLEU oracle

/// Corpus statistics computed with naive nested loops, independently of the
/// library's hash-map counting.
#[derive(Debug)]
pub struct BruteBleu {
    pub precisions: [f64; 4],
    pub bp: f64,
    pub c: usize,
    pub r: usize,
    pub bleu: [f64; 4],
}

fn ngrams(s: &[String], n: usize) -> Vec<&[String]> {
    if s.len() < n {
        return Vec::new();
    }
    (0..=s.len() - n).map(|i| &s[i..i + n]).collect()
}

pub fn brute_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> BruteBleu {
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c, mut r) = (0, 0);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let hg = ngrams(h, n);
            let rg = ngrams(rf, n);
            total[n - 1] += hg.len();
            // Each distinct hypothesis n-gram is visited once (at its first
            // occurrence) and credited min(count in hyp, count in ref).
            for (i, g) in hg.iter().enumerate() {
                if hg[..i].contains(g) {
                    continue;
                }
                let in_h = hg.iter().filter(|x| *x == g).count();
                let in_r = rg.iter().filter(|x| *x == g).count();
                matched[n - 1] += in_h.min(in_r);
            }
        }
    }
    let mut precisions = [0.0; 4];
    for n in 0..4 {
        precisions[n] = if total[n] == 0 { 0.0 } else { matched[n] as f64 / total[n] as f64 };
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    let mut bleu = [0.0; 4];
    for k in 1..=4 {
        let ps = &precisions[..k];
        bleu[k - 1] = if ps.contains(&0.0) {
            0.0
        } else {
            100.0 * bp * (ps.iter().map(|p| p.ln()).sum::<f64>() / k as f64).exp()
        };
    }
    BruteBleu {
        precisions,
        bp,
        c,
        r,
        bleu,
    }
}

/// `n` sentences of 1..=`max_len` words drawn from `w0`..`w{vocab-1}`.
pub fn random_corpus(rng: &mut impl rand::Rng, n: usize, vocab: usize, max_len: usize) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect::<Vec<_>>().join(" ")
        })
        .collect()
}

// -------------------------------------------------------- toy step models

/// A step model whose next-token distribution is a pseudo-random function of
/// the whole prefix. Token ids: 0 `<s>`, 1 `<pad>`, 2 `</s>`, then
/// `real` ordinary tokens. `<s>` and `<pad>` get probability zero.
pub struct HashModel {
    pub seed: u64,
    pub real: usize,
    /// Larger values make the distributions peakier.
    pub temperature: f64,
}

impl HashModel {
    pub fn row(&self, prefix: &[u32]) -> Vec<f64> {
        let mut h = DefaultHasher::new();
        (self.seed, prefix).hash(&mut h);
        let mut rng = seeded_rng(h.finish(), 0);
        let v = 3 + self.real;
        let logits: Vec<f64> = (0..v)
            .map(|i| {
                if i < 2 {
                    f64::NEG_INFINITY
                } else {
                    self.temperature * rng.gen::<f64>()
                }
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        logits.iter().map(|l| l - max - z.ln()).collect()
    }
}

impl StepModel for HashModel {
    fn vocab_size(&self) -> usize {
        3 + self.real
    }

    fn next_log_probs(&self, prefixes: &[u32], n: usize) -> Result<Vec<f64>> {
        let len = prefixes.len() / n;
        Ok(prefixes.chunks(len).flat_map(|p| self.row(p)).collect())
    }
}

/// Best `(score, tokens)` over every sequence the search may produce:
/// sequences ending in `</s>` within `max_len` tokens, plus unfinished ones of
/// exactly `max_len` tokens. Ties go to the lexicographically smaller sequence.
pub fn exhaustive_best(model: &HashModel, max_len: usize, alpha: f64) -> (f64, Vec<u32>) {
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut consider = |score: f64, tokens: Vec<u32>| {
        let better = match &best {
            None => true,
            Some((s, t)) => score > *s || (score == *s && tokens < *t),
        };
        if better {
            best = Some((score, tokens));
        }
    };
    let mut stack: Vec<(Vec<u32>, f64)> = vec![(vec![BOS], 0.0)];
    while let Some((prefix, lp)) = stack.pop() {
        let row = model.row(&prefix);
        for (tok, &l) in row.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            let mut t = prefix.clone();
            t.push(tok as u32);
            let cum = lp + l;
            let generated = t.len() - 1;
            if tok as u32 == EOS || generated == max_len {
                consider(cum / (generated as f64).powf(alpha), t);
            } else {
                stack.push((t, cum));
            }
        }
    }
    best.unwrap()
}

// ------------------------------------------------------------ synthetic data

/// The desk-scale task: 30 words, 4 frames per word, D = 64, σ = 0.01.
pub fn synth_language(noise: f64) -> SynthLanguage {
    SynthLanguage::new(SynthConfig {
        noise,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn to_dataset(items: Vec<SynthItem>, vocab: &Vocabulary) -> Dataset {
    let examples = items
        .into_iter()
        .map(|it| Example {
            tokens: slt_core::data::encode_target(vocab, &it.transcript),
            id: it.id,
            features: std::sync::Arc::new(it.features),
            transcript: it.transcript,
        })
        .collect();
    Dataset { examples }
}

/// Small model for fast training tests on synthetic data.
pub fn tiny_config(feature_dim: usize, vocab_size: usize) -> ModelConfig {
    ModelConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        embed_dim: 16,
        ffn_dim: 32,
        attention_heads: 2,
        activation: Activation::Relu,
        dropout: 0.1,
        attention_dropout: 0.0,
        activation_dropout: 0.0,
        feature_dim,
        vocab_size,
        max_positions: 256,
    }
}

/// Path to the `slt` binary built for this test run.
pub fn slt_bin() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_BIN_EXE_slt"))
}

// ------------------------------------------------------- per-op gradcheck

type OpCheck = fn(u64) -> f64;

fn unary(seed: u64, shape: &[usize], op: impl Fn(&Tape<f64>, Var) -> Result<Var>) -> f64 {
    let mut rng = seeded_rng(seed, 1);
    let x = randn_away_from_zero(shape, 0.05, &mut rng);
    check_gradients(&[x], &|t, v| {
        let y = op(t, v[0])?;
        project(t, y, seed)
    })
}

fn binary(seed: u64, a: &[usize], b: &[usize], op: impl Fn(&Tape<f64>, Var, Var) -> Result<Var>) -> f64 {
    let mut rng = seeded_rng(seed, 1);
    let x = randn(a, &mut rng);
    let y = randn(b, &mut rng);
    check_gradients(&[x, y], &|t, v| {
        let z = op(t, v[0], v[1])?;
        project(t, z, seed)
    })
}

/// Every differentiable tape operation, each checked on random inputs drawn
/// from the given seed.
pub fn op_checks() -> Vec<(&'static str, OpCheck)> {
    vec![
        ("matmul", |s| binary(s, &[3, 4], &[4, 5], |t, a, b| t.matmul(a, b))),
        ("matmul_rank3", |s| binary(s, &[2, 3, 4], &[4, 2], |t, a, b| t.matmul(a, b))),
        ("bmm", |s| binary(s, &[2, 3, 4], &[2, 4, 3], |t, a, b| t.bmm(a, b, false))),
        ("bmm_transposed", |s| binary(s, &[2, 3, 4], &[2, 5, 4], |t, a, b| t.bmm(a, b, true))),
        ("add", |s| binary(s, &[3, 4], &[3, 4], |t, a, b| t.add(a, b))),
        ("mul", |s| binary(s, &[3, 4], &[3, 4], |t, a, b| t.mul(a, b))),
        ("add_bias", |s| binary(s, &[2, 3, 4], &[4], |t, a, b| t.add_bias(a, b))),
        ("scale", |s| unary(s, &[3, 4], |t, x| Ok(t.scale(x, 1.7)))),
        ("add_const", |s| {
            unary(s, &[3, 4], |t, x| {
                let c = Tensor::from_fn([3, 4], |i| if i % 5 == 0 { f64::NEG_INFINITY } else { i as f64 });
                // -inf entries are only allowed where they are masked later;
                // exponentiate through softmax so they vanish.
                let y = t.add_const(x, &c)?;
                Ok(t.softmax(y))
            })
        }),
        ("mul_const", |s| unary(s, &[3, 4], |t, x| t.mul_const(x, (0..12).map(|i| i as f64 * 0.3).collect()))),
        ("relu", |s| unary(s, &[4, 5], |t, x| Ok(t.relu(x)))),
        ("gelu", |s| unary(s, &[4, 5], |t, x| Ok(t.gelu(x)))),
        ("dropout", |s| {
            unary(s, &[4, 5], |t, x| {
                let mut rng = seeded_rng(s, 5);
                t.dropout(x, 0.3, Mode::Train, &mut rng)
            })
        }),
        ("softmax", |s| unary(s, &[3, 5], |t, x| Ok(t.softmax(x)))),
        ("log_softmax", |s| unary(s, &[3, 5], |t, x| Ok(t.log_softmax(x)))),
        ("layer_norm", |s| {
            let mut rng = seeded_rng(s, 1);
            let x = randn(&[3, 6], &mut rng);
            let g = randn(&[6], &mut rng);
            let b = randn(&[6], &mut rng);
            check_gradients(&[x, g, b], &|t, v| {
                let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
                project(t, y, s)
            })
        }),
        ("embedding", |s| {
            // repeated ids exercise gradient accumulation into one row
            unary(s, &[6, 4], |t, table| t.embedding(table, &[0, 3, 3, 5, 0, 2], Some(1)))
        }),
        ("reshape", |s| unary(s, &[2, 6], |t, x| t.reshape(x, [3, 4]))),
        ("swap_axes12", |s| unary(s, &[2, 3, 2, 2], |t, x| t.swap_axes12(x))),
        ("sum", |s| unary(s, &[3, 4], |t, x| {
            let y = t.sum(x);
            t.mul(y, y)
        })),
        ("smoothed_ce", |s| {
            let mut rng = seeded_rng(s, 1);
            let x = randn(&[5, 7], &mut rng);
            check_gradients(&[x], &|t, v| {
                let logp = t.log_softmax(v[0]);
                Ok(t.smoothed_ce(logp, &[0, 3, 1, 6, 2], 0.1, 1)?.0)
            })
        }),
        ("reused_value", |s| {
            // one value feeding three branches: gradients must add up
            unary(s, &[3, 3], |t, x| {
                let a = t.mul(x, x)?;
                let b = t.matmul(x, x)?;
                let c = t.add(a, b)?;
                t.add(c, x)
            })
        }),
    ]
}
