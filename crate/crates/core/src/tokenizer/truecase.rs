use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

/// Unigram truecaser: each lowercase word maps to its most frequent surface
/// form in the training transcripts.
///
/// Sentence-initial words are not counted, since their capitalization says
/// nothing about the word itself. Ties go to the lexicographically smallest
/// form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CasingModel {
    forms: BTreeMap<String, String>,
    pub capitalize_first: bool,
}

/// Splits a token into leading punctuation, alphanumeric core, trailing punctuation.
fn split_core(token: &str) -> (&str, &str, &str) {
    let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(token.len());
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map(|i| i + token[i..].chars().next().unwrap().len_utf8())
        .unwrap_or(start);
    (&token[..start], &token[start..end], &token[end..])
}

fn capitalize(word: &str) -> String {
    let mut out = String::with_capacity(word.len());
    let mut done = false;
    for c in word.chars() {
        if !done && c.is_alphabetic() {
            out.extend(c.to_uppercase());
            done = true;
        } else {
            out.push(c);
        }
    }
    out
}

impl CasingModel {
    pub fn learn<S: AsRef<str>>(transcripts: &[S]) -> Self {
        let mut counts: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for line in transcripts {
            for token in line.as_ref().split_whitespace().skip(1) {
                let (_, core, _) = split_core(token);
                if core.is_empty() {
                    continue;
                }
                *counts
                    .entry(core.to_lowercase())
                    .or_default()
                    .entry(core.to_string())
                    .or_default() += 1;
            }
        }
        let forms = counts
            .into_iter()
            .map(|(lower, surfaces)| {
                let best = surfaces
                    .into_iter()
                    .max_by(|(sa, ca), (sb, cb)| ca.cmp(cb).then_with(|| sb.cmp(sa)))
                    .map(|(s, _)| s)
                    .unwrap();
                (lower, best)
            })
            .collect();
        CasingModel {
            forms,
            capitalize_first: true,
        }
    }

    /// Builds a model from explicit `lowercase -> surface` pairs.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut forms = BTreeMap::new();
        for (k, v) in pairs {
            let (k, v) = (k.into(), v.into());
            if k != k.to_lowercase() || v.to_lowercase() != k {
                return Err(Error::InvalidArgument(format!(
                    "casing entry `{k}` -> `{v}` must differ only in letter case"
                )));
            }
            forms.insert(k, v);
        }
        Ok(CasingModel {
            forms,
            capitalize_first: true,
        })
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn surface(&self, lower: &str) -> Option<&str> {
        self.forms.get(lower).map(String::as_str)
    }

    /// Restores casing word by word, then capitalizes the first word.
    pub fn apply(&self, text: &str) -> String {
        let mut words: Vec<String> = text
            .split_whitespace()
            .map(|token| {
                let (pre, core, post) = split_core(token);
                match self.forms.get(&core.to_lowercase()) {
                    Some(form) => format!("{pre}{form}{post}"),
                    None => token.to_string(),
                }
            })
            .collect();
        if self.capitalize_first {
            if let Some(first) = words.first_mut() {
                *first = capitalize(first);
            }
        }
        words.join(" ")
    }

    /// Tab-separated `lowercase<TAB>surface`, one entry per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for (k, v) in &self.forms {
            s.push_str(k);
            s.push('\t');
            s.push_str(v);
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                reason: "expected `lowercase<TAB>surface`".into(),
            })?;
            pairs.push((k.to_string(), v.to_string()));
        }
        Self::from_pairs(pairs)
    }
}

/// Convenience for [`CasingModel::apply`].
pub fn truecase(text: &str, casing: &CasingModel) -> String {
    casing.apply(text)
}
