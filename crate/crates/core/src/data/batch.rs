use std::sync::Arc;

use rand::seq::SliceRandom;

use super::{load_features, FeatureSequence, Manifest};
use crate::error::{Error, Result};
use crate::tensor::{seeded_rng, Tensor};
use crate::tokenizer::{Vocabulary, BOS, EOS, PAD};

/// Source lengths within the same multiple of this many frames share a bucket.
pub const BUCKET_WIDTH: usize = 8;
/// Keeps the shuffling stream apart from the dropout streams of the same seed.
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4521;

/// One encoded dataset item.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub features: Arc<FeatureSequence>,
    /// `<s> … </s>`
    pub tokens: Vec<u32>,
    pub transcript: String,
}

/// A padded mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    /// Positions of the items in their dataset.
    pub indices: Vec<usize>,
    /// `[B, T_max, D]`, zero beyond each source length.
    pub features: Tensor<f32>,
    pub src_lengths: Vec<usize>,
    /// `[B, L_max]` row-major `<s> … </s>` ids, pad beyond each length.
    pub tokens: Vec<u32>,
    pub tgt_lengths: Vec<usize>,
}

impl Batch {
    pub fn collate(examples: &[&Example], indices: Vec<usize>) -> Result<Self> {
        let Some(first) = examples.first() else {
            return Err(Error::InvalidArgument("empty batch".into()));
        };
        let dim = first.features.dim();
        let t_max = examples.iter().map(|e| e.features.frames()).max().unwrap_or(0);
        let l_max = examples.iter().map(|e| e.tokens.len()).max().unwrap_or(0);
        let b = examples.len();
        let mut feats = vec![0f32; b * t_max * dim];
        let mut tokens = vec![PAD; b * l_max];
        for (i, e) in examples.iter().enumerate() {
            if e.features.dim() != dim {
                return Err(Error::InvalidArgument(format!(
                    "item `{}` has feature dim {}, batch has {dim}",
                    e.id,
                    e.features.dim()
                )));
            }
            let at = i * t_max * dim;
            feats[at..at + e.features.values().len()].copy_from_slice(e.features.values());
            tokens[i * l_max..i * l_max + e.tokens.len()].copy_from_slice(&e.tokens);
        }
        Ok(Batch {
            indices,
            features: Tensor::new([b, t_max, dim], feats)?,
            src_lengths: examples.iter().map(|e| e.features.frames()).collect(),
            tokens,
            tgt_lengths: examples.iter().map(|e| e.tokens.len()).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.src_lengths.len()
    }

    fn target_width(&self) -> usize {
        self.tokens.len() / self.size()
    }

    /// Teacher-forcing input: every row without its last position.
    pub fn decoder_input(&self) -> Vec<u32> {
        let l = self.target_width();
        self.tokens.chunks(l).flat_map(|r| r[..l - 1].iter().copied()).collect()
    }

    /// Prediction targets: every row shifted left by one.
    pub fn decoder_target(&self) -> Vec<u32> {
        let l = self.target_width();
        self.tokens.chunks(l).flat_map(|r| r[1..].iter().copied()).collect()
    }

    /// Number of non-pad prediction targets.
    pub fn target_tokens(&self) -> usize {
        self.tgt_lengths.iter().map(|l| l - 1).sum()
    }
}

/// Groups item indices into batches of at most `batch_size`.
///
/// Items are shuffled, stably sorted into buckets of [`BUCKET_WIDTH`]
/// frames, cut into consecutive batches, and the batch order is shuffled.
/// The result depends only on the lengths, `seed` and `epoch`.
pub fn batch_plan(src_lengths: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut rng = seeded_rng(seed ^ SHUFFLE_SALT, epoch);
    let mut order: Vec<usize> = (0..src_lengths.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| src_lengths[i] / BUCKET_WIDTH);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(&mut rng);
    batches
}

/// Items of one split, encoded and held in memory.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Loads every feature file of `manifest` and encodes its transcripts.
    pub fn load(manifest: &Manifest, vocab: &Vocabulary) -> Result<Self> {
        let mut examples = Vec::with_capacity(manifest.len());
        for r in &manifest.records {
            let features = Arc::new(load_features(&r.features)?);
            examples.push(Example {
                id: r.id.clone(),
                features,
                tokens: encode_target(vocab, &r.transcript),
                transcript: r.transcript.clone(),
            });
        }
        Ok(Dataset { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.examples.first().map(|e| e.features.dim())
    }

    pub fn source_lengths(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.features.frames()).collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let items: Vec<&Example> = indices.iter().map(|&i| &self.examples[i]).collect();
        Batch::collate(&items, indices.to_vec())
    }

    /// Batches for one epoch, built lazily in [`batch_plan`] order.
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: u64) -> impl Iterator<Item = Batch> + '_ {
        batch_plan(&self.source_lengths(), batch_size, seed, epoch)
            .into_iter()
            .map(move |idx| self.batch(&idx).expect("dataset items share one feature dim"))
    }
}

/// `<s>` + subword ids + `</s>`.
pub fn encode_target(vocab: &Vocabulary, transcript: &str) -> Vec<u32> {
    let mut ids = vec![BOS];
    ids.extend(vocab.encode(transcript));
    ids.push(EOS);
    debug_assert!(!ids[1..ids.len() - 1].contains(&PAD));
    ids
}

/// [`Dataset::load`] plus [`Dataset::batches`].
pub fn make_batches(
    manifest: &Manifest,
    vocab: &Vocabulary,
    batch_size: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Batch>> {
    let data = Dataset::load(manifest, vocab)?;
    if let Some(dim) = data.feature_dim() {
        if let Some(e) = data.examples.iter().find(|e| e.features.dim() != dim) {
            return Err(Error::InvalidArgument(format!(
                "item `{}` has feature dim {}, expected {dim}",
                e.id,
                e.features.dim()
            )));
        }
    }
    let plan = batch_plan(&data.source_lengths(), batch_size, seed, 0);
    Ok(plan.into_iter().map(move |idx| data.batch(&idx).expect("checked dims")))
}
