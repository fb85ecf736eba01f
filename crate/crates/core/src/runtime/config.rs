// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runtime::tokenizer::NUM_SPECIAL_IDS;

fn default_vocab() -> usize {
    256 + NUM_SPECIAL_IDS
}

/// Transformer hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq: usize,
    #[serde(default)]
    pub init_seed: u64,
}

impl ModelConfig {
    /// Desk-scale reference configuration.
    pub fn reference() -> Self {
        Self {
            vocab_size: default_vocab(),
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            d_ff: 256,
            max_seq: 512,
            init_seed: 0,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn total_heads(&self) -> usize {
        self.n_layers * self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_seq", self.max_seq),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < default_vocab() {
            return Err(Error::Config(format!(
                "vocab_size {} cannot hold 256 bytes plus BOS/EOS/PAD",
                self.vocab_size
            )));
        }
        Ok(())
    }
}
