// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};
use crate::runtime::config::ModelConfig;

/// Named weight tensors, iterated in name order.
pub type Weights = BTreeMap<String, Tensor>;

/// Standard deviation of randomly initialized projection weights.
pub const INIT_STD: f64 = 0.02;

pub(crate) fn layer_tensor(layer: usize, name: &str) -> String {
    format!("layers.{layer}.{name}")
}

/// Every tensor name with its shape, in name order.
pub fn weight_schema(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (v, d, f, s) = (config.vocab_size, config.d_model, config.d_ff, config.max_seq);
    let mut schema = vec![
        ("tok_emb".to_owned(), vec![v, d]),
        ("pos_emb".to_owned(), vec![s, d]),
        ("final_norm".to_owned(), vec![d]),
        ("unembed".to_owned(), vec![d, v]),
    ];
    for l in 0..config.n_layers {
        for (name, shape) in [
            ("attn_norm", vec![d]),
            ("wq", vec![d, d]),
            ("wk", vec![d, d]),
            ("wv", vec![d, d]),
            ("wo", vec![d, d]),
            ("mlp_norm", vec![d]),
            ("w_up", vec![d, f]),
            ("w_down", vec![f, d]),
        ] {
            schema.push((layer_tensor(l, name), shape));
        }
    }
    schema.sort();
    schema
}

pub(crate) fn is_norm_gain(name: &str) -> bool {
    name.ends_with("norm")
}

/// A decoder-only transformer: configuration plus its complete weight set.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    weights: Weights,
}

impl Model {
    /// Validates that `weights` matches the schema implied by `config` exactly.
    pub fn from_parts(config: ModelConfig, weights: Weights) -> Result<Self> {
        config.validate()?;
        let schema = weight_schema(&config);
        if schema.len() != weights.len() {
            return Err(Error::Structural {
                tensor: "*".into(),
                message: format!("expected {} tensors, found {}", schema.len(), weights.len()),
            });
        }
        for (name, shape) in &schema {
            match weights.get(name) {
                None => {
                    return Err(Error::Structural {
                        tensor: name.clone(),
                        message: "missing".into(),
                    })
                }
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Structural {
                        tensor: name.clone(),
                        message: format!("shape {:?}, expected {shape:?}", t.shape()),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn into_parts(self) -> (ModelConfig, Weights) {
        (self.config, self.weights)
    }

    /// Runs `edit` on the weights and re-validates the schema afterwards.
    /// On any error the model is left unchanged.
    pub fn edit_weights(&mut self, edit: impl FnOnce(&mut Weights) -> Result<()>) -> Result<()> {
        let mut weights = self.weights.clone();
        edit(&mut weights)?;
        let checked = Model::from_parts(self.config.clone(), weights)?;
        self.weights = checked.weights;
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> &Tensor {
        self.weights
            .get(name)
            .unwrap_or_else(|| panic!("schema-validated model lacks `{name}`"))
    }

    /// SHA-256 over the config and every tensor (name, dims, little-endian data).
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for (name, t) in &self.weights {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            h.update(t.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

/// SHA-256 of one tensor's dims and data.
pub fn tensor_checksum(t: &Tensor) -> String {
    let mut h = Sha256::new();
    for &d in t.shape() {
        h.update((d as u64).to_le_bytes());
    }
    h.update(t.to_le_bytes());
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Random model: norm gains are one, every other tensor is drawn from
/// N(0, 0.02²) in schema order from a single stream seeded with `seed`.
pub fn init_random(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let config = ModelConfig {
        init_seed: seed,
        ..config.clone()
    };
    let mut rng = Rng::new(seed);
    let mut weights = Weights::new();
    for (name, shape) in weight_schema(&config) {
        let numel: usize = shape.iter().product();
        let data = if is_norm_gain(&name) {
            vec![1.0; numel]
        } else {
            (0..numel).map(|_| (rng.normal() * INIT_STD) as f32).collect()
        };
        weights.insert(name, Tensor::new(shape, data)?);
    }
    Model::from_parts(config, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_count() {
        let c = ModelConfig::reference();
        assert_eq!(weight_schema(&c).len(), 4 + 8 * c.n_layers);
    }

    #[test]
    fn init_is_deterministic() {
        let c = ModelConfig::reference();
        let a = init_random(&c, 1).unwrap();
        let b = init_random(&c, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());
        let other = init_random(&c, 2).unwrap();
        assert_ne!(a.tensor("tok_emb"), other.tensor("tok_emb"));
        assert_ne!(a.checksum(), other.checksum());
    }

    #[test]
    fn init_statistics() {
        let m = init_random(&ModelConfig::reference(), 5).unwrap();
        let w = m.tensor("unembed").data();
        let n = w.len() as f64;
        let mean = w.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let std = (w.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 2e-3);
        assert!((std - INIT_STD).abs() < 2e-3);
        assert!(m.tensor("final_norm").data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn from_parts_rejects_missing_tensor() {
        let m = init_random(&ModelConfig::reference(), 0).unwrap();
        let (c, mut w) = m.into_parts();
        w.remove("unembed");
        assert!(matches!(
            Model::from_parts(c, w),
            Err(Error::Structural { .. })
        ));
    }
}
