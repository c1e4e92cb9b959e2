use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const HEADER: &str = "id\tfeatures\ttranscript";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    /// Absolute, or relative to the working directory once loaded.
    pub features: PathBuf,
    pub transcript: String,
}

/// One split of a dataset: `(id, feature file, transcript)` records.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub split: String,
    pub records: Vec<Record>,
}

impl Manifest {
    /// Parses manifest text. Feature paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path, split: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: format!("expected header `{}`", HEADER.replace('\t', "\\t")),
                })
            }
        }
        let mut seen = HashSet::new();
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(id), Some(feat), Some(text)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: "expected 3 tab-separated columns".into(),
                });
            };
            if !seen.insert(id.to_string()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("duplicate id `{id}`"),
                });
            }
            records.push(Record {
                id: id.to_string(),
                features: base.join(feat),
                transcript: text.to_string(),
            });
        }
        Ok(Manifest {
            split: split.to_string(),
            records,
        })
    }

    /// Loads a manifest and checks that every feature file exists. The split
    /// name is the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let split = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        let m = Self::parse(&text, base, &split, path)?;
        let missing: Vec<String> = m
            .records
            .iter()
            .filter(|r| !r.features.is_file())
            .map(|r| r.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingFeatures(missing));
        }
        Ok(m)
    }

    /// Writes the manifest with feature paths made relative to the manifest's
    /// directory where possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.records {
            let rel = r.features.strip_prefix(base).unwrap_or(&r.features);
            if r.id.contains(['\t', '\n']) || r.transcript.contains(['\t', '\n']) {
                return Err(Error::InvalidArgument(format!("record `{}` contains a tab or newline", r.id)));
            }
            writeln!(out, "{}\t{}\t{}", r.id, rel.display(), r.transcript).unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn transcripts(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.transcript.as_str()).collect()
    }
}
