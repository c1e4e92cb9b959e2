//! A learnable stand-in for sign-video features.
//!
//! Every word of a small invented lexicon owns `k` fixed random frames. A
//! sentence's feature sequence is its words' frames concatenated, plus
//! Gaussian noise. Without noise the mapping is injective, so a model can
//! learn it to near-perfect accuracy.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{FeatureSequence, Manifest, Record};
use crate::error::{Error, Result};
use crate::tensor::{seeded_rng, Rng};

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
/// Every this-many-th word is a proper noun, written capitalized.
const PROPER_EVERY: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub vocab_words: usize,
    pub frames_per_word: usize,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_words: 30,
            frames_per_word: 4,
            dim: 64,
            noise: 0.01,
            seed: 1,
            min_words: 3,
            max_words: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let max_words = ONSETS.len() * VOWELS.len() * ONSETS.len() * VOWELS.len();
        if self.vocab_words == 0 || self.vocab_words > max_words {
            return Err(Error::config("vocab_words", format!("must be in 1..={max_words}")));
        }
        if self.frames_per_word == 0 {
            return Err(Error::config("frames_per_word", "must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise", "must be finite and non-negative"));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::config("min_words", "need 1 <= min_words <= max_words"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthItem {
    pub id: String,
    pub words: Vec<usize>,
    pub transcript: String,
    pub features: FeatureSequence,
}

/// The lexicon and its frame prototypes.
#[derive(Clone, Debug)]
pub struct SynthLanguage {
    pub config: SynthConfig,
    words: Vec<String>,
    /// `vocab_words × k × dim`
    prototypes: Vec<f32>,
}

impl SynthLanguage {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed, 0);
        let mut words = Vec::with_capacity(config.vocab_words);
        while words.len() < config.vocab_words {
            let mut w = String::new();
            for _ in 0..2 {
                w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
                w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
            }
            if words.contains(&w) {
                continue;
            }
            if words.len() % PROPER_EVERY == PROPER_EVERY - 1 {
                w = capitalize(&w);
            }
            words.push(w);
        }
        let n = config.vocab_words * config.frames_per_word * config.dim;
        let prototypes = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(SynthLanguage {
            config,
            words,
            prototypes,
        })
    }

    /// Surface forms; proper nouns are capitalized.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Frame `f` of word `w`.
    pub fn prototype(&self, w: usize, f: usize) -> &[f32] {
        let (k, d) = (self.config.frames_per_word, self.config.dim);
        let at = (w * k + f) * d;
        &self.prototypes[at..at + d]
    }

    /// Transcript of a word sequence: words joined by spaces, first letter
    /// capitalized.
    pub fn transcript(&self, words: &[usize]) -> String {
        let s = words.iter().map(|&w| self.words[w].as_str()).collect::<Vec<_>>().join(" ");
        capitalize(&s)
    }

    /// Features of a word sequence; noise is drawn from `rng` when σ > 0.
    pub fn render(&self, words: &[usize], rng: &mut Rng) -> FeatureSequence {
        let (k, d) = (self.config.frames_per_word, self.config.dim);
        let sigma = self.config.noise;
        let mut values = Vec::with_capacity(words.len() * k * d);
        for &w in words {
            for f in 0..k {
                values.extend_from_slice(self.prototype(w, f));
            }
        }
        if sigma > 0.0 {
            for v in &mut values {
                let z: f64 = StandardNormal.sample(rng);
                *v += (sigma * z) as f32;
            }
        }
        FeatureSequence::new(words.len() * k, d, values).expect("synthetic features are finite")
    }

    /// `count` random sentences. Different `stream`s give independent
    /// samples from the same language; ids are `<prefix>-<index>`.
    pub fn sample(&self, count: usize, stream: u64, prefix: &str) -> Vec<SynthItem> {
        let mut rng = seeded_rng(self.config.seed, 1 + stream);
        (0..count)
            .map(|i| {
                let n = rng.gen_range(self.config.min_words..=self.config.max_words);
                let words: Vec<usize> = (0..n).map(|_| rng.gen_range(0..self.words.len())).collect();
                let features = self.render(&words, &mut rng);
                SynthItem {
                    id: format!("{prefix}-{i:05}"),
                    transcript: self.transcript(&words),
                    words,
                    features,
                }
            })
            .collect()
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Writes a synthetic corpus to `dir`: one `<split>.tsv` manifest per
/// `(split, count)` pair and the feature files under `dir/features/`.
pub fn generate_synthetic(config: &SynthConfig, splits: &[(&str, usize)], dir: &Path) -> Result<Vec<Manifest>> {
    let lang = SynthLanguage::new(config.clone())?;
    let feat_dir = dir.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(format!("creating {}", feat_dir.display()), e))?;
    let mut out = Vec::new();
    for (s, &(split, count)) in splits.iter().enumerate() {
        let mut records = Vec::with_capacity(count);
        for item in lang.sample(count, s as u64, split) {
            let path = feat_dir.join(format!("{}.sltf", item.id));
            item.features.save(&path)?;
            records.push(Record {
                id: item.id,
                features: path,
                transcript: item.transcript,
            });
        }
        let manifest = Manifest {
            split: split.to_string(),
            records,
        };
        manifest.save(&dir.join(format!("{split}.tsv")))?;
        out.push(manifest);
    }
    Ok(out)
}
