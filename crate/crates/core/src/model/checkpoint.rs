//! Binary checkpoint container.
//!
//! Layout (all integers unsigned 32-bit little-endian):
//!
//! ```text
//! "SLTCKPT1"
//! u32 n, n bytes of UTF-8 `key=value` lines
//! u32 tensor count
//! per tensor: u32 name length, name bytes, u32 rank, rank × u32 dims,
//!             product(dims) × f32 little-endian
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SLTCKPT1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: self.at + n,
                actual: self.buf.len(),
            });
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Parse {
            path: self.path.to_path_buf(),
            line: 0,
            reason: "invalid UTF-8".into(),
        })
    }
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let mut block = String::new();
        for (k, v) in &self.meta {
            block.push_str(k);
            block.push('=');
            block.push_str(v);
            block.push('\n');
        }
        out.extend_from_slice(&(block.len() as u32).to_le_bytes());
        out.extend_from_slice(block.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { buf, at: 0, path };
        if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "SLTCKPT1",
            });
        }
        r.take(MAGIC.len())?;
        let n = r.u32()? as usize;
        let block = r.string(n)?;
        let mut meta = Vec::new();
        for (i, line) in block.lines().enumerate() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("config line `{line}` is not key=value"),
            })?;
            meta.push((k.to_string(), v.to_string()));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = r.string(n)?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = dims.iter().product();
            let raw = r.take(len * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::new(dims, data)?));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&buf, path)
    }
}

impl Model<f32> {
    /// Checkpoint holding the configuration and every weight.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        self.params.for_each(|n, t| tensors.push((n.to_string(), Tensor::clone(t))));
        Checkpoint {
            meta: self.config.to_pairs(),
            tensors,
        }
    }

    /// Restores a model; metadata keys and tensors that are not part of the
    /// model are ignored.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut config = ModelConfig::default();
        for (k, v) in &ckpt.meta {
            config.set(k, v)?;
        }
        config.validate()?;
        let by_name: HashMap<&str, &Tensor<f32>> = ckpt.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut missing = Vec::new();
        let skeleton = super::params::shape_tree(&config);
        let params = skeleton.map(|name, shape| match by_name.get(name) {
            Some(t) => Arc::new(Tensor::clone(t)),
            None => {
                missing.push(name.to_string());
                Arc::new(Tensor::zeros(shape.clone()))
            }
        });
        if !missing.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "checkpoint lacks tensors: {}",
                missing.join(", ")
            )));
        }
        Model::from_params(config, params)
    }
}
