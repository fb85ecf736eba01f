// SPDX-License-Identifier: MIT OR Apache-2.0

//! STW1 weight files.
//!
//! ```text
//! "STW1" | u32 LE header_len | header_len bytes of JSON ModelConfig
//! then, per tensor until end of file:
//!   u32 LE name_len | name | u32 LE rank | rank × u64 LE dims | f32 LE data
//! ```
//!
//! Tensors are written in name order. Every name and shape is checked
//! against the schema derived from the header config.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::runtime::config::ModelConfig;
use crate::runtime::model::{weight_schema, Model, Weights};

pub const MAGIC: &[u8; 4] = b"STW1";

/// Whether every schema tensor must be present (models) or any subset
/// (weight deltas).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completeness {
    Full,
    Subset,
}

pub fn encode(config: &ModelConfig, tensors: &Weights) -> Vec<u8> {
    let header = serde_json::to_vec(config).expect("config serializes");
    let mut out = Vec::with_capacity(8 + header.len() + tensors.values().map(|t| t.numel() * 4 + 64).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn decode(bytes: &[u8], completeness: Completeness) -> Result<(ModelConfig, Weights)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}")));
    }
    let header_len = cur.u32("header length")? as usize;
    let header_at = cur.pos;
    let header = cur.take(header_len, "header")?;
    let config: ModelConfig = serde_json::from_slice(header)
        .map_err(|e| format_err(header_at, format!("invalid config header: {e}")))?;
    config
        .validate()
        .map_err(|e| format_err(header_at, e.to_string()))?;

    let schema: HashMap<String, Vec<usize>> = weight_schema(&config).into_iter().collect();
    let mut tensors = Weights::new();
    while !cur.at_end() {
        let record_at = cur.pos;
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "tensor name")?)
            .map_err(|_| format_err(record_at + 4, "tensor name is not UTF-8"))?
            .to_owned();
        let rank = cur.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(cur.u64("dimension")? as usize);
        }
        match schema.get(&name) {
            None => return Err(format_err(record_at, format!("unknown tensor `{name}`"))),
            Some(expected) if *expected != dims => {
                return Err(format_err(
                    record_at,
                    format!("tensor `{name}` has shape {dims:?}, config implies {expected:?}"),
                ))
            }
            Some(_) => {}
        }
        if tensors.contains_key(&name) {
            return Err(format_err(record_at, format!("duplicate tensor `{name}`")));
        }
        let numel: usize = dims.iter().product();
        let raw = cur.take(numel * 4, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.insert(name, Tensor::new(dims, data)?);
    }
    if completeness == Completeness::Full {
        if let Some(missing) = schema.keys().filter(|n| !tensors.contains_key(*n)).min() {
            return Err(format_err(cur.pos, format!("missing tensor `{missing}`")));
        }
    }
    Ok((config, tensors))
}

pub fn write_file(path: &Path, config: &ModelConfig, tensors: &Weights) -> Result<()> {
    std::fs::write(path, encode(config, tensors)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path, completeness: Completeness) -> Result<(ModelConfig, Weights)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, completeness)
}

pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    write_file(path, model.config(), model.weights())
}

pub fn load_weights(path: &Path) -> Result<Model> {
    let (config, weights) = read_file(path, Completeness::Full)?;
    Model::from_parts(config, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::model::init_random;

    fn tiny() -> Model {
        let cfg = ModelConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_seq: 16,
            ..ModelConfig::reference()
        };
        init_random(&cfg, 9).unwrap()
    }

    #[test]
    fn round_trip_bitwise() {
        let m = tiny();
        let bytes = encode(m.config(), m.weights());
        let (c, w) = decode(&bytes, Completeness::Full).unwrap();
        let back = Model::from_parts(c, w).unwrap();
        assert_eq!(encode(back.config(), back.weights()), bytes);
    }

    #[test]
    fn file_size_is_exact() {
        let m = tiny();
        let bytes = encode(m.config(), m.weights());
        let header = serde_json::to_vec(m.config()).unwrap().len();
        let records: usize = m
            .weights()
            .iter()
            .map(|(n, t)| 4 + n.len() + 4 + 8 * t.rank() + 4 * t.numel())
            .sum();
        assert_eq!(bytes.len(), 4 + 4 + header + records);
    }

    #[test]
    fn corrupt_magic_reports_offset_zero() {
        let m = tiny();
        let mut bytes = encode(m.config(), m.weights());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes, Completeness::Full), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_is_reported() {
        let m = tiny();
        let bytes = encode(m.config(), m.weights());
        let cut = &bytes[..bytes.len() - 3];
        match decode(cut, Completeness::Full) {
            Err(Error::Format { offset, message }) => {
                assert!(offset > 8);
                assert!(message.contains("truncated"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_tensor_rejected_for_models_only() {
        let m = tiny();
        let mut w = m.weights().clone();
        w.remove("unembed");
        let bytes = encode(m.config(), &w);
        assert!(matches!(decode(&bytes, Completeness::Full), Err(Error::Format { .. })));
        assert_eq!(decode(&bytes, Completeness::Subset).unwrap().1.len(), w.len());
    }

    #[test]
    fn shape_mismatch_names_record() {
        let m = tiny();
        let mut w = Weights::new();
        w.insert("final_norm".into(), Tensor::zeros(&[9]));
        let bytes = encode(m.config(), &w);
        let header = serde_json::to_vec(m.config()).unwrap().len();
        match decode(&bytes, Completeness::Subset) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, 8 + header),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
