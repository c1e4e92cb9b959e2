use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use super::{corpus_bleu, rbleu, tokenize_for_scoring, BleuReport, ExclusionList};
use crate::data::{Dataset, Manifest};
use crate::decode::{translate_all, DecodeConfig};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tokenizer::{CasingModel, Vocabulary};

/// One line of the results table: `rBLEU  BLEU-1  BLEU-2  BLEU-3  BLEU`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRow {
    pub rbleu: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu: f64,
}

impl ScoreRow {
    pub const HEADER: &'static str = "rBLEU\tBLEU-1\tBLEU-2\tBLEU-3\tBLEU";

    pub fn new(bleu: &BleuReport, reduced: &BleuReport) -> Self {
        ScoreRow {
            rbleu: reduced.score(),
            bleu1: bleu.bleu[0],
            bleu2: bleu.bleu[1],
            bleu3: bleu.bleu[2],
            bleu: bleu.bleu[3],
        }
    }
}

impl fmt::Display for ScoreRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            self.rbleu, self.bleu1, self.bleu2, self.bleu3, self.bleu
        )
    }
}

/// Scored outputs for one split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitEvaluation {
    pub ids: Vec<String>,
    pub hypotheses: Vec<String>,
    pub references: Vec<String>,
    pub bleu: BleuReport,
    pub rbleu: BleuReport,
}

impl SplitEvaluation {
    pub fn score(ids: Vec<String>, hypotheses: Vec<String>, references: Vec<String>, excl: &ExclusionList) -> Result<Self> {
        let bleu = corpus_bleu(&hypotheses, &references)?;
        let reduced = rbleu(&hypotheses, &references, excl)?;
        Ok(SplitEvaluation {
            ids,
            hypotheses,
            references,
            bleu,
            rbleu: reduced,
        })
    }

    pub fn row(&self) -> ScoreRow {
        ScoreRow::new(&self.bleu, &self.rbleu)
    }

    /// Fraction of sentences whose scoring tokens equal the reference's.
    pub fn exact_match(&self) -> f64 {
        let hits = self
            .hypotheses
            .iter()
            .zip(&self.references)
            .filter(|(h, r)| tokenize_for_scoring(h) == tokenize_for_scoring(r))
            .count();
        hits as f64 / self.hypotheses.len().max(1) as f64
    }

    /// `id<TAB>hypothesis` per line, in split order.
    pub fn write_hypotheses(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (id, h) in self.ids.iter().zip(&self.hypotheses) {
            writeln!(out, "{id}\t{h}").unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Detokenizes subword ids and restores casing.
pub fn postprocess(vocab: &Vocabulary, casing: &CasingModel, ids: &[u32]) -> Result<String> {
    Ok(casing.apply(&vocab.decode(ids)?))
}

/// Beam-decodes every item of `data` and scores the post-processed output
/// against the raw transcripts.
pub fn evaluate_dataset(
    model: &Model<f32>,
    data: &Dataset,
    vocab: &Vocabulary,
    casing: &CasingModel,
    decode: &DecodeConfig,
    excl: &ExclusionList,
) -> Result<SplitEvaluation> {
    let inputs: Vec<_> = data.examples.iter().map(|e| e.features.as_ref()).collect();
    let hyps = translate_all(model, &inputs, decode, false)?;
    let hypotheses = hyps
        .iter()
        .map(|h| postprocess(vocab, casing, h.output()))
        .collect::<Result<Vec<_>>>()?;
    SplitEvaluation::score(
        data.examples.iter().map(|e| e.id.clone()).collect(),
        hypotheses,
        data.examples.iter().map(|e| e.transcript.clone()).collect(),
        excl,
    )
}

/// [`evaluate_dataset`] on the items of a manifest.
pub fn evaluate_split(
    model: &Model<f32>,
    manifest: &Manifest,
    vocab: &Vocabulary,
    casing: &CasingModel,
    decode: &DecodeConfig,
    excl: &ExclusionList,
) -> Result<SplitEvaluation> {
    let missing: Vec<String> = manifest
        .records
        .iter()
        .filter(|r| !r.features.is_file())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFeatures(missing));
    }
    let data = Dataset::load(manifest, vocab)?;
    evaluate_dataset(model, &data, vocab, casing, decode, excl)
}

/// Runs the references themselves through encode, decode and truecasing and
/// scores them; a sanity check of the text pipeline.
pub fn evaluate_references(
    manifest: &Manifest,
    vocab: &Vocabulary,
    casing: &CasingModel,
    excl: &ExclusionList,
) -> Result<SplitEvaluation> {
    let hypotheses = manifest
        .records
        .iter()
        .map(|r| postprocess(vocab, casing, &vocab.encode(&r.transcript)))
        .collect::<Result<Vec<_>>>()?;
    SplitEvaluation::score(
        manifest.records.iter().map(|r| r.id.clone()).collect(),
        hypotheses,
        manifest.records.iter().map(|r| r.transcript.clone()).collect(),
        excl,
    )
}
