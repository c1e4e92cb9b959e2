//! `SLTF` feature files.
//!
//! ```text
//! "SLTF" | u8 version = 1 | u32 T | u32 D | T·D × f32     (little-endian)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SLTF";
pub const VERSION: u8 = 1;
const HEADER: usize = 4 + 1 + 4 + 4;

/// Per-frame visual features, `frames × dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    values: Tensor<f32>,
}

impl FeatureSequence {
    pub fn new(frames: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature sequence must be non-empty, got {frames}×{dim}"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature value at index {i}")));
        }
        Ok(FeatureSequence {
            values: Tensor::new([frames, dim], values)?,
        })
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &[f32] {
        self.values.data()
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        self.values.row(t)
    }

    pub fn as_tensor(&self) -> &Tensor<f32> {
        &self.values
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for v in self.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a feature file. `path` is only used in error messages.
    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        if buf.len() < 4 || &buf[..4] != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "SLTF",
            });
        }
        if buf.len() < HEADER {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: HEADER,
                actual: buf.len(),
            });
        }
        if buf[4] != VERSION {
            return Err(Error::BadVersion {
                path: path.to_path_buf(),
                version: buf[4] as u32,
            });
        }
        let frames = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(buf[9..13].try_into().unwrap()) as usize;
        let expected = HEADER + 4 * frames * dim;
        if buf.len() != expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                actual: buf.len(),
            });
        }
        if frames == 0 || dim == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("empty feature block {frames}×{dim}"),
            });
        }
        let mut values = Vec::with_capacity(frames * dim);
        for (i, c) in buf[HEADER..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    path: path.to_path_buf(),
                    index: i,
                });
            }
            values.push(v);
        }
        Ok(FeatureSequence {
            values: Tensor::new([frames, dim], values)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Reads an `SLTF` file without transforming its contents.
pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    let buf = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    FeatureSequence::from_bytes(&buf, path)
}
