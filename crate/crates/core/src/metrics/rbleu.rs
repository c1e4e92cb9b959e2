use std::collections::BTreeSet;
use std::path::Path;

use super::bleu::{bleu_from_tokens, tokenize_for_scoring, BleuConfig, BleuReport};
use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Words deleted from hypotheses and references before rBLEU is computed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExclusionList {
    words: BTreeSet<String>,
}

impl ExclusionList {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The shipped English stopword list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS, Path::new("<built-in stopwords>")).expect("built-in list is valid")
    }

    /// One word per line; `#` starts a comment. Words are lowercased.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut words = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("`{line}` contains whitespace"),
                });
            }
            words.insert(line.to_lowercase());
        }
        Ok(ExclusionList { words })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        ExclusionList {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Scoring tokens of `text` minus excluded words.
    pub fn filter(&self, text: &str) -> Vec<String> {
        tokenize_for_scoring(text).into_iter().filter(|t| !self.contains(t)).collect()
    }
}

/// BLEU after deleting every excluded word from both sides. Lengths are
/// measured after filtering.
pub fn rbleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], excl: &ExclusionList) -> Result<BleuReport> {
    rbleu_with(hyps, refs, excl, BleuConfig::default())
}

pub fn rbleu_with<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    excl: &ExclusionList,
    cfg: BleuConfig,
) -> Result<BleuReport> {
    let h: Vec<Vec<String>> = hyps.iter().map(|s| excl.filter(s.as_ref())).collect();
    let r: Vec<Vec<Vec<String>>> = refs.iter().map(|s| vec![excl.filter(s.as_ref())]).collect();
    bleu_from_tokens(&h, &r, cfg)
}
