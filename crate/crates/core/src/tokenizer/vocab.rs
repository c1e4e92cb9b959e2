use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const BOS: u32 = 0;
pub const PAD: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

/// Marks a subword that starts a word.
pub const WORD_START: char = '\u{2581}';

const SPECIALS: [&str; 4] = ["<s>", "<pad>", "</s>", "<unk>"];
const HEADER: &str = "SLTVOCAB 1";
const MERGES_MARK: &str = "#MERGES";

/// A learned byte-pair-encoding vocabulary over lowercased text.
///
/// Ids are dense: `0..4` are the specials (`<s>`, `<pad>`, `</s>`, `<unk>`),
/// followed by the base symbols in sorted order, followed by merged subwords
/// in the order they were learned.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    merge_rank: HashMap<(String, String), usize>,
}

fn word_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| if i == 0 { format!("{WORD_START}{c}") } else { c.to_string() })
        .collect()
}

fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) -> bool {
    let mut changed = false;
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
            changed = true;
        } else {
            out.push(std::mem::take(&mut symbols[i]));
            i += 1;
        }
    }
    *symbols = out;
    changed
}

impl Vocabulary {
    /// Learns merges greedily by pair frequency until the table holds `size`
    /// entries or no adjacent pair occurs at least twice. Ties go to the
    /// lexicographically smallest pair.
    pub fn train<S: AsRef<str>>(corpus: &[S], size: usize) -> Result<Self> {
        let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
        for line in corpus {
            for w in line.as_ref().to_lowercase().split_whitespace() {
                *word_counts.entry(w.to_string()).or_default() += 1;
            }
        }
        if word_counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut words: Vec<(Vec<String>, usize)> =
            word_counts.iter().map(|(w, &c)| (word_symbols(w), c)).collect();
        let base: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
        if size < base.len() + SPECIALS.len() {
            return Err(Error::InvalidArgument(format!(
                "vocabulary size {size} is below the {} base symbols plus {} specials",
                base.len(),
                SPECIALS.len()
            )));
        }

        let mut vocab = Vocabulary::from_parts(
            SPECIALS.iter().map(|s| s.to_string()).chain(base).collect(),
            Vec::new(),
        )?;

        while vocab.pieces.len() < size {
            let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
            for (syms, c) in &words {
                for pair in syms.windows(2) {
                    *counts.entry((pair[0].as_str(), pair[1].as_str())).or_default() += c;
                }
            }
            let best = counts
                .into_iter()
                .filter(|&(_, c)| c >= 2)
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
                .map(|((l, r), _)| (l.to_string(), r.to_string()));
            let Some((left, right)) = best else { break };
            for (syms, _) in &mut words {
                merge_pair(syms, &left, &right);
            }
            vocab.push_merge(left, right);
        }
        Ok(vocab)
    }

    fn from_parts(pieces: Vec<String>, merges: Vec<(String, String)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if index.insert(p.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate subword `{p}`")));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if pieces.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::InvalidArgument(format!("special `{s}` must have id {i}")));
            }
        }
        let mut vocab = Vocabulary {
            pieces,
            index,
            merges: Vec::new(),
            merge_rank: HashMap::new(),
        };
        for (l, r) in merges {
            let joined = format!("{l}{r}");
            if !vocab.index.contains_key(&joined) {
                return Err(Error::InvalidArgument(format!("merge output `{joined}` not in table")));
            }
            vocab.merge_rank.insert((l.clone(), r.clone()), vocab.merges.len());
            vocab.merges.push((l, r));
        }
        Ok(vocab)
    }

    fn push_merge(&mut self, left: String, right: String) {
        let joined = format!("{left}{right}");
        if !self.index.contains_key(&joined) {
            self.index.insert(joined.clone(), self.pieces.len() as u32);
            self.pieces.push(joined);
        }
        self.merge_rank.insert((left.clone(), right.clone()), self.merges.len());
        self.merges.push((left, right));
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.merge_rank.get(&(p[0].clone(), p[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            merge_pair(&mut syms, l, r);
        }
        syms
    }

    /// Lowercases and segments `text`. Symbols outside the table map to
    /// `<unk>`; the result never contains `<pad>`, `<s>` or `</s>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let lower = text.to_lowercase();
        let mut ids = Vec::new();
        for word in lower.split_whitespace() {
            for sym in self.segment_word(word) {
                ids.push(self.id(&sym).unwrap_or(UNK));
            }
        }
        ids
    }

    /// Joins subwords back into space-separated words. Special ids other
    /// than `<unk>` are dropped.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let piece = self.piece(id).ok_or(Error::IdOutOfRange {
                id: id as usize,
                size: self.len(),
            })?;
            match id {
                BOS | PAD | EOS => {}
                UNK => out.push_str(piece),
                _ => out.extend(piece.chars().map(|c| if c == WORD_START { ' ' } else { c })),
            }
        }
        Ok(out.trim_start().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\nsize={}\n", self.len());
        for p in &self.pieces {
            s.push_str(p);
            s.push('\n');
        }
        s.push_str(MERGES_MARK);
        s.push('\n');
        for (l, r) in &self.merges {
            let _ = writeln!(s, "{l}\t{r}");
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => {
                return Err(Error::BadMagic {
                    path: path.to_path_buf(),
                    expected: HEADER,
                })
            }
        }
        let size: usize = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("size="))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| parse_err(2, "expected `size=<n>`".into()))?;
        let mut pieces = Vec::with_capacity(size);
        for _ in 0..size {
            let (_, l) = lines.next().ok_or_else(|| parse_err(3 + pieces.len(), "too few subwords".into()))?;
            pieces.push(l.to_string());
        }
        match lines.next() {
            Some((_, MERGES_MARK)) => {}
            other => {
                return Err(parse_err(
                    other.map_or(size + 3, |(n, _)| n + 1),
                    format!("expected `{MERGES_MARK}`"),
                ))
            }
        }
        let mut merges = Vec::new();
        for (n, l) in lines {
            if l.is_empty() {
                continue;
            }
            let (a, b) = l
                .split_once('\t')
                .ok_or_else(|| parse_err(n + 1, "merge line needs `left<TAB>right`".into()))?;
            merges.push((a.to_string(), b.to_string()));
        }
        Vocabulary::from_parts(pieces, merges).map_err(|e| parse_err(0, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_text(&text, path)
    }
}
